#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hintnart/student.hpp"
#include "hintnart/teacher.hpp"

namespace hintnart {

struct InferenceConfig {
  int length_bias = 0;        // C in T_y = T_x + C
  std::size_t halfwidth = 4;  // B; the candidate range is [(T_x+C)-B, (T_x+C)+B]
  bool rescore = true;
  // "highest probability" taken literally: unnormalized log-prob sums by
  // default; division by candidate length is exposed for exploration.
  bool normalize_by_length = false;
};

// max(1, T_x + C)
std::size_t predict_length(std::size_t t_src, int length_bias);

// Closed range around the predicted length, clamped below at 1,
// de-duplicated, ascending; at most 2B+1 entries.
std::vector<std::size_t> candidate_lengths(std::size_t t_src, int length_bias,
                                           std::size_t halfwidth);

struct Candidate {
  std::size_t length = 0;      // decoder length of the student pass
  std::vector<int> tokens;     // truncated at the first <eos>
  std::vector<double> student_logprobs;  // per-position max log-prob, pre-truncation
  double teacher_logprob = -std::numeric_limits<double>::infinity();
};

struct TranslationResult {
  Candidate chosen;
  std::vector<Candidate> candidates;
  std::size_t student_passes = 0;
  std::size_t teacher_scorings = 0;
};

// One student pass per candidate length; with rescoring the teacher scores
// each candidate (tokens plus <eos>) and the best wins, ties to the shorter
// length then lexicographic tokens. Rescoring never edits tokens.
TranslationResult translate(const std::vector<int>& src, const StudentModel& student,
                            const TeacherModel* teacher, const InferenceConfig& cfg);

double rescoring_score(const TeacherModel& teacher, const std::vector<int>& src,
                       const Candidate& cand, bool normalize_by_length);

struct LatencyReport {
  std::size_t sentences = 0;
  double teacher_wall_ms_mean = 0.0;
  double teacher_wall_ms_median = 0.0;
  double student_wall_ms_mean = 0.0;
  double student_wall_ms_median = 0.0;
  double wall_ratio = 0.0;  // teacher mean / student mean
  std::uint64_t teacher_steps = 0;   // total sequential decoder steps
  std::uint64_t student_passes = 0;  // total decoder forward passes
  std::vector<std::size_t> teacher_steps_per_sentence;
  std::vector<std::size_t> student_passes_per_sentence;
};

// Strictly single-threaded, batch size 1 per sentence.
LatencyReport latency_report(const TeacherModel& teacher, const StudentModel& student,
                             const std::vector<std::vector<int>>& sources,
                             const InferenceConfig& cfg, std::size_t teacher_max_len);

std::string to_text(const LatencyReport& report);  // key<TAB>value lines

}  // namespace hintnart
