#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hintnart/checkpoint.hpp"
#include "hintnart/data.hpp"
#include "hintnart/losses.hpp"
#include "hintnart/student.hpp"
#include "hintnart/teacher.hpp"

namespace hintnart {

// Ablation switches map one-to-one onto the loss-combination study columns.
enum class AblationMode {
  nll_only,   // plain sequence-level distillation
  nll_align,  // + attention-alignment KL
  full,       // + pairwise hidden-state penalty
  nll_l2,     // negative control: direct L2 hidden-state regression
};
std::string to_string(AblationMode mode);
AblationMode ablation_from_string(const std::string& s);

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 16;  // sentence pairs
  std::size_t warmup_steps = 400;
  double lr_scale = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double dropout = 0.1;   // sublayer outputs and attention weights
  double clip_norm = 1.0; // global gradient norm; 0 disables
  std::uint64_t seed = 1;
  HintConfig hint;
  double tau = 0.3;  // soft-copy sharpness
  AblationMode ablation = AblationMode::full;
  bool cache_hints = true;  // reuse teacher traces across epochs

  void validate() const;
};

// lr(s) = lr_scale * d_model^-0.5 * min(s^-0.5, s * warmup^-1.5)
double learning_rate(const TrainConfig& cfg, std::size_t d_model, std::size_t step);

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};
using LogSink = std::function<void(const StepLog&)>;
std::string format_log_line(const StepLog& log);  // step, lr, nll, hid, align, total

// Independent seed streams derived from the run seed; training state is a
// pure function of (seed, step), so resuming needs no generator snapshot.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
inline constexpr std::uint64_t kStreamTeacherInit = 1;
inline constexpr std::uint64_t kStreamStudentInit = 2;
inline constexpr std::uint64_t kStreamBatchOrder = 3;
inline constexpr std::uint64_t kStreamDropout = 4;

// One Adam update from the gradients bound in ctx. Moments and parameters
// are narrowed to float32 after every step, so checkpoints capture the
// in-memory state exactly.
void adam_step(ParamStore& store, const GraphCtx& ctx, const TrainConfig& cfg,
               std::size_t step_1based, std::size_t d_model);

// Batches group sentences of similar target length; visit order reshuffles
// every epoch from the batch-order stream.
std::vector<std::vector<std::size_t>> build_batches(std::size_t corpus_size,
                                                    const std::vector<std::size_t>& sort_keys,
                                                    std::size_t batch_size);

class TeacherTrainer {
 public:
  TeacherTrainer(TeacherModel& model, TokenCorpus corpus, TrainConfig cfg);

  StepLog run_step();
  void run(std::size_t steps, const LogSink& sink = nullptr);
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }
  // State that produced the most recent finite loss; what a divergence abort
  // should persist.
  const ParamStore& last_good_params() const;

 private:
  const std::vector<std::size_t>& batch_for_step(std::uint64_t step);

  TeacherModel& model_;
  TokenCorpus corpus_;
  TrainConfig cfg_;
  std::vector<std::vector<std::size_t>> batches_;
  std::vector<std::size_t> epoch_order_;
  std::uint64_t cached_epoch_ = ~0ULL;
  std::uint64_t step_ = 0;  // completed steps
  std::optional<ParamStore> last_good_;
};

struct DistilledPair {
  std::vector<int> src;
  std::vector<int> distilled;  // teacher greedy decode, the training target
  std::vector<int> original;   // kept for evaluation only
};
struct DistilledCorpus {
  std::vector<DistilledPair> pairs;
  std::size_t dropped = 0;  // empty teacher decodes
};

DistilledCorpus distill_corpus(const TeacherModel& teacher, const TokenCorpus& corpus);

// round(mean(|target| - |source|)) over the distilled training corpus
int derive_length_bias(const DistilledCorpus& corpus);

class StudentTrainer {
 public:
  StudentTrainer(StudentModel& student, const TeacherModel& teacher, DistilledCorpus corpus,
                 TrainConfig cfg);

  StepLog run_step();
  void run(std::size_t steps, const LogSink& sink = nullptr);
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }
  const ParamStore& last_good_params() const;
  // Number of teacher forced decodes performed for hints; stays 0 in
  // nll-only mode.
  std::uint64_t hint_trace_evaluations() const { return trace_evals_; }

 private:
  struct Trace {
    std::vector<NdArray> hidden;
    std::vector<NdArray> attn;
  };
  const Trace& trace_for(std::size_t index);
  const std::vector<std::size_t>& batch_for_step(std::uint64_t step);

  StudentModel& student_;
  const TeacherModel& teacher_;
  DistilledCorpus corpus_;
  TrainConfig cfg_;
  std::vector<std::vector<std::size_t>> batches_;
  std::vector<std::size_t> epoch_order_;
  std::uint64_t cached_epoch_ = ~0ULL;
  std::uint64_t step_ = 0;
  std::uint64_t trace_evals_ = 0;
  std::vector<std::optional<Trace>> cache_;
  Trace scratch_;  // uncached path
  std::optional<ParamStore> last_good_;
};

// Whole-recipe helpers. On divergence they write a last-good checkpoint to
// abort_path (when given) and rethrow.
TeacherModel train_teacher(const TokenCorpus& corpus, const ModelConfig& model_cfg,
                           const TrainConfig& cfg, const LogSink& sink = nullptr,
                           const std::string& abort_path = "",
                           const std::vector<std::string>& vocab = {});
StudentModel train_student(const TeacherModel& teacher, const DistilledCorpus& corpus,
                           const ModelConfig& model_cfg, const TrainConfig& cfg,
                           const LogSink& sink = nullptr, const std::string& abort_path = "",
                           const std::vector<std::string>& vocab = {});

Checkpoint make_teacher_checkpoint(const TeacherModel& model, std::uint64_t step,
                                   std::uint64_t seed, const std::vector<std::string>& vocab);
Checkpoint make_student_checkpoint(const StudentModel& model, std::uint64_t step,
                                   std::uint64_t seed, const std::vector<std::string>& vocab,
                                   int length_bias);
TeacherModel teacher_from_checkpoint(const Checkpoint& ckpt);
StudentModel student_from_checkpoint(const Checkpoint& ckpt);

}  // namespace hintnart
