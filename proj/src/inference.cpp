#include "hintnart/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "hintnart/errors.hpp"

namespace hintnart {

std::size_t predict_length(std::size_t t_src, int length_bias) {
  if (t_src < 1) throw ContractError("predict_length: source length must be >= 1");
  const long long raw = static_cast<long long>(t_src) + length_bias;
  return raw < 1 ? 1 : static_cast<std::size_t>(raw);
}

std::vector<std::size_t> candidate_lengths(std::size_t t_src, int length_bias,
                                           std::size_t halfwidth) {
  const long long center = static_cast<long long>(t_src) + length_bias;
  std::vector<std::size_t> lengths;
  for (long long l = center - static_cast<long long>(halfwidth);
       l <= center + static_cast<long long>(halfwidth); ++l) {
    const std::size_t clamped = l < 1 ? 1 : static_cast<std::size_t>(l);
    if (lengths.empty() || lengths.back() != clamped) lengths.push_back(clamped);
  }
  return lengths;
}

namespace {

Candidate decode_candidate(const StudentModel& student, const std::vector<int>& src,
                           std::size_t length) {
  Candidate cand;
  cand.length = length;
  const StudentTrace trace = student.parallel_decode(src, length);
  const std::vector<int> raw = StudentModel::predict_tokens(trace.logits);

  const std::size_t v = trace.logits.shape[1];
  cand.student_logprobs.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double* row = trace.logits.data.data() + t * v;
    const double m = *std::max_element(row, row + v);
    double s = 0.0;
    for (std::size_t i = 0; i < v; ++i) s += std::exp(row[i] - m);
    cand.student_logprobs[t] = row[static_cast<std::size_t>(raw[t])] - m - std::log(s);
  }

  for (int tok : raw) {
    if (tok == kEosId) break;
    cand.tokens.push_back(tok);
  }
  return cand;
}

}  // namespace

double rescoring_score(const TeacherModel& teacher, const std::vector<int>& src,
                       const Candidate& cand, bool normalize_by_length) {
  std::vector<int> seq = cand.tokens;
  seq.push_back(kEosId);
  const double lp = teacher.score_sequence(src, seq);
  return normalize_by_length ? lp / static_cast<double>(seq.size()) : lp;
}

TranslationResult translate(const std::vector<int>& src, const StudentModel& student,
                            const TeacherModel* teacher, const InferenceConfig& cfg) {
  if (cfg.rescore && teacher == nullptr) {
    throw ConfigError("translate: rescoring requested without a teacher model");
  }

  TranslationResult result;
  std::vector<std::size_t> lengths;
  if (cfg.rescore) {
    lengths = candidate_lengths(src.size(), cfg.length_bias, cfg.halfwidth);
  } else {
    lengths = {predict_length(src.size(), cfg.length_bias)};
  }

  for (std::size_t len : lengths) {
    result.candidates.push_back(decode_candidate(student, src, len));
    ++result.student_passes;
  }

  if (!cfg.rescore) {
    result.chosen = result.candidates.front();
    return result;
  }

  for (Candidate& cand : result.candidates) {
    cand.teacher_logprob = rescoring_score(*teacher, src, cand, cfg.normalize_by_length);
    ++result.teacher_scorings;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.candidates.size(); ++i) {
    const Candidate& a = result.candidates[i];
    const Candidate& b = result.candidates[best];
    if (a.teacher_logprob > b.teacher_logprob) {
      best = i;
    } else if (a.teacher_logprob == b.teacher_logprob) {
      if (a.length < b.length || (a.length == b.length && a.tokens < b.tokens)) best = i;
    }
  }
  result.chosen = result.candidates[best];
  return result;
}

LatencyReport latency_report(const TeacherModel& teacher, const StudentModel& student,
                             const std::vector<std::vector<int>>& sources,
                             const InferenceConfig& cfg, std::size_t teacher_max_len) {
  if (sources.empty()) throw InputError("latency_report: empty corpus");
  using Clock = std::chrono::steady_clock;

  LatencyReport report;
  report.sentences = sources.size();
  std::vector<double> teacher_ms, student_ms;
  teacher_ms.reserve(sources.size());
  student_ms.reserve(sources.size());

  for (const auto& src : sources) {
    teacher.reset_sequential_steps();
    const auto t0 = Clock::now();
    const std::vector<int> decoded = teacher.greedy_decode(src, teacher_max_len);
    const auto t1 = Clock::now();
    teacher_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    report.teacher_steps_per_sentence.push_back(teacher.sequential_steps());
    report.teacher_steps += teacher.sequential_steps();
    (void)decoded;

    student.reset_sequential_steps();
    const auto s0 = Clock::now();
    const TranslationResult res =
        translate(src, student, cfg.rescore ? &teacher : nullptr, cfg);
    const auto s1 = Clock::now();
    student_ms.push_back(std::chrono::duration<double, std::milli>(s1 - s0).count());
    report.student_passes_per_sentence.push_back(student.sequential_steps());
    report.student_passes += student.sequential_steps();
    (void)res;
  }

  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  auto median = [](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  };
  report.teacher_wall_ms_mean = mean(teacher_ms);
  report.teacher_wall_ms_median = median(teacher_ms);
  report.student_wall_ms_mean = mean(student_ms);
  report.student_wall_ms_median = median(student_ms);
  report.wall_ratio = report.teacher_wall_ms_mean / report.student_wall_ms_mean;
  return report;
}

std::string to_text(const LatencyReport& r) {
  std::ostringstream os;
  os << "sentences\t" << r.sentences << '\n';
  os << "teacher_wall_ms_mean\t" << r.teacher_wall_ms_mean << '\n';
  os << "teacher_wall_ms_median\t" << r.teacher_wall_ms_median << '\n';
  os << "student_wall_ms_mean\t" << r.student_wall_ms_mean << '\n';
  os << "student_wall_ms_median\t" << r.student_wall_ms_median << '\n';
  os << "wall_ratio_teacher_over_student\t" << r.wall_ratio << '\n';
  os << "teacher_sequential_steps\t" << r.teacher_steps << '\n';
  os << "student_decoder_passes\t" << r.student_passes << '\n';
  return os.str();
}

}  // namespace hintnart
