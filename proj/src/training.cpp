#include "hintnart/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hintnart/errors.hpp"
#include "hintnart/kernels.hpp"

namespace hintnart {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::nll_only: return "nll";
    case AblationMode::nll_align: return "nll_align";
    case AblationMode::full: return "full";
    case AblationMode::nll_l2: return "nll_l2";
  }
  return "full";
}

AblationMode ablation_from_string(const std::string& s) {
  if (s == "nll" || s == "nll_only") return AblationMode::nll_only;
  if (s == "nll_align") return AblationMode::nll_align;
  if (s == "full" || s == "nll_align_hid") return AblationMode::full;
  if (s == "nll_l2") return AblationMode::nll_l2;
  throw ConfigError("unknown ablation mode: " + s);
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must lie in [0, 1)");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  if (tau <= 0.0) throw ConfigError("train: tau must be positive");
  hint.validate();
}

double learning_rate(const TrainConfig& cfg, std::size_t d_model, std::size_t step) {
  const double s = static_cast<double>(step);
  return cfg.lr_scale * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5),
                  s * std::pow(static_cast<double>(cfg.warmup_steps), -1.5));
}

std::string format_log_line(const StepLog& log) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g", log.step, log.lr,
                log.loss.nll, log.loss.hid, log.loss.align, log.loss.total);
  return buf;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return Rng(base + stream * 0x9E3779B97F4A7C15ULL).next_u64();
}

void adam_step(ParamStore& store, const GraphCtx& ctx, const TrainConfig& cfg,
               std::size_t step_1based, std::size_t d_model) {
  const auto& kb = kernels::active();

  double clip_factor = 1.0;
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [name, t] : store.tensors()) {
      auto it = ctx.bound.find(name);
      if (it == ctx.bound.end()) continue;
      const NdArray& g = it->second.node()->grad;
      if (g.numel() != t.value.size()) continue;
      sq += kb.sqsum(g.data.data(), g.numel());
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) clip_factor = cfg.clip_norm / norm;
  }

  const double lr = learning_rate(cfg, d_model, step_1based);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step_1based));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step_1based));

  for (auto& [name, t] : store.tensors()) {
    const double* g = nullptr;
    auto it = ctx.bound.find(name);
    if (it != ctx.bound.end()) {
      const NdArray& ga = it->second.node()->grad;
      if (ga.numel() == t.value.size()) g = ga.data.data();
    }
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      const double gi = (g ? g[i] : 0.0) * clip_factor;
      // narrow moments first so an uninterrupted run and a resumed run see
      // the same float32 state
      t.adam_m[i] = static_cast<float>(cfg.adam_beta1 * static_cast<double>(t.adam_m[i]) +
                                       (1.0 - cfg.adam_beta1) * gi);
      t.adam_v[i] = static_cast<float>(cfg.adam_beta2 * static_cast<double>(t.adam_v[i]) +
                                       (1.0 - cfg.adam_beta2) * gi * gi);
      const double mhat = static_cast<double>(t.adam_m[i]) / bc1;
      const double vhat = static_cast<double>(t.adam_v[i]) / bc2;
      t.value[i] = static_cast<float>(static_cast<double>(t.value[i]) -
                                      lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

std::vector<std::vector<std::size_t>> build_batches(std::size_t corpus_size,
                                                    const std::vector<std::size_t>& sort_keys,
                                                    std::size_t batch_size) {
  std::vector<std::size_t> order(corpus_size);
  for (std::size_t i = 0; i < corpus_size; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sort_keys[a] < sort_keys[b];
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < corpus_size; start += batch_size) {
    const std::size_t end = std::min(start + batch_size, corpus_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(derive_seed(seed, kStreamBatchOrder), epoch));
  for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
  return perm;
}

}  // namespace

TeacherTrainer::TeacherTrainer(TeacherModel& model, TokenCorpus corpus, TrainConfig cfg)
    : model_(model), corpus_(std::move(corpus)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (corpus_.empty()) throw InputError("train_teacher: empty corpus");
  std::vector<std::size_t> keys(corpus_.size());
  for (std::size_t i = 0; i < corpus_.size(); ++i) keys[i] = corpus_[i].tgt.size();
  batches_ = build_batches(corpus_.size(), keys, cfg_.batch_size);
}

const std::vector<std::size_t>& TeacherTrainer::batch_for_step(std::uint64_t step) {
  const std::uint64_t epoch = step / batches_.size();
  if (epoch != cached_epoch_) {
    epoch_order_ = epoch_permutation(batches_.size(), cfg_.seed, epoch);
    cached_epoch_ = epoch;
  }
  return batches_[epoch_order_[step % batches_.size()]];
}

StepLog TeacherTrainer::run_step() {
  const std::size_t s = static_cast<std::size_t>(step_) + 1;
  const auto& batch = batch_for_step(step_);

  Rng drop_rng(derive_seed(derive_seed(cfg_.seed, kStreamDropout), s));
  GraphCtx ctx{&model_.params()};
  ctx.trainable = true;
  if (cfg_.dropout > 0.0) {
    ctx.dropout = cfg_.dropout;
    ctx.dropout_rng = &drop_rng;
  }

  std::vector<ad::Var> sentence_losses;
  sentence_losses.reserve(batch.size());
  for (std::size_t idx : batch) {
    const TokenPair& pair = corpus_[idx];
    std::vector<int> tgt = pair.tgt;
    tgt.push_back(kEosId);
    auto fwd = model_.forced_forward(ctx, pair.src, tgt);
    sentence_losses.push_back(nll_loss_graph(fwd.logits, tgt, cfg_.hint.eps_ls));
  }
  ad::Var loss = ad::scale(ad::add_n(sentence_losses), 1.0 / static_cast<double>(batch.size()));
  const LossBreakdown bd = loss_total(loss.value().data[0], 0.0, 0.0, cfg_.hint);
  last_good_ = model_.params();  // these parameters produced a finite loss

  ad::backward(loss);
  adam_step(model_.params(), ctx, cfg_, s, model_.config().d_model);
  ++step_;
  return {s, learning_rate(cfg_, model_.config().d_model, s), bd};
}

void TeacherTrainer::run(std::size_t steps, const LogSink& sink) {
  for (std::size_t i = 0; i < steps; ++i) {
    const StepLog log = run_step();
    if (sink) sink(log);
  }
}

const ParamStore& TeacherTrainer::last_good_params() const {
  return last_good_ ? *last_good_ : model_.params();
}

DistilledCorpus distill_corpus(const TeacherModel& teacher, const TokenCorpus& corpus) {
  DistilledCorpus out;
  out.pairs.reserve(corpus.size());
  for (const TokenPair& pair : corpus) {
    std::vector<int> decoded = teacher.greedy_decode(pair.src, teacher.config().max_len);
    if (decoded.empty()) {
      ++out.dropped;
      continue;
    }
    out.pairs.push_back({pair.src, std::move(decoded), pair.tgt});
  }
  return out;
}

int derive_length_bias(const DistilledCorpus& corpus) {
  if (corpus.pairs.empty()) throw InputError("derive_length_bias: empty corpus");
  double sum = 0.0;
  for (const DistilledPair& p : corpus.pairs) {
    sum += static_cast<double>(p.distilled.size()) - static_cast<double>(p.src.size());
  }
  return static_cast<int>(std::llround(sum / static_cast<double>(corpus.pairs.size())));
}

StudentTrainer::StudentTrainer(StudentModel& student, const TeacherModel& teacher,
                               DistilledCorpus corpus, TrainConfig cfg)
    : student_(student), teacher_(teacher), corpus_(std::move(corpus)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (corpus_.pairs.empty()) throw InputError("train_student: empty distilled corpus");
  if (!teacher_.config().same_skeleton(student_.config())) {
    throw ConfigError("train_student: teacher and student must share layers, heads, d_model");
  }
  std::vector<std::size_t> keys(corpus_.pairs.size());
  for (std::size_t i = 0; i < corpus_.pairs.size(); ++i) {
    keys[i] = corpus_.pairs[i].distilled.size();
  }
  batches_ = build_batches(corpus_.pairs.size(), keys, cfg_.batch_size);
  cache_.resize(corpus_.pairs.size());
}

const std::vector<std::size_t>& StudentTrainer::batch_for_step(std::uint64_t step) {
  const std::uint64_t epoch = step / batches_.size();
  if (epoch != cached_epoch_) {
    epoch_order_ = epoch_permutation(batches_.size(), cfg_.seed, epoch);
    cached_epoch_ = epoch;
  }
  return batches_[epoch_order_[step % batches_.size()]];
}

const StudentTrainer::Trace& StudentTrainer::trace_for(std::size_t index) {
  if (cfg_.cache_hints && cache_[index].has_value()) return *cache_[index];
  const DistilledPair& pair = corpus_.pairs[index];
  DecoderTrace t = teacher_.forced_decode(pair.src, pair.distilled);
  ++trace_evals_;
  Trace trace{std::move(t.hidden), std::move(t.attn)};
  if (cfg_.cache_hints) {
    cache_[index] = std::move(trace);
    return *cache_[index];
  }
  scratch_ = std::move(trace);
  return scratch_;
}

StepLog StudentTrainer::run_step() {
  const std::size_t s = static_cast<std::size_t>(step_) + 1;
  const auto& batch = batch_for_step(step_);

  Rng drop_rng(derive_seed(derive_seed(cfg_.seed, kStreamDropout), s));
  GraphCtx ctx{&student_.params()};
  ctx.trainable = true;
  if (cfg_.dropout > 0.0) {
    ctx.dropout = cfg_.dropout;
    ctx.dropout_rng = &drop_rng;
  }

  const AblationMode mode = cfg_.ablation;
  double nll_sum = 0.0, hid_sum = 0.0, align_sum = 0.0;
  std::vector<ad::Var> sentence_totals;
  sentence_totals.reserve(batch.size());

  for (std::size_t idx : batch) {
    const DistilledPair& pair = corpus_.pairs[idx];
    auto fwd = student_.parallel_forward(ctx, pair.src, pair.distilled.size());

    ad::Var total = nll_loss_graph(fwd.logits, pair.distilled, cfg_.hint.eps_ls);
    nll_sum += total.value().data[0];

    if (mode != AblationMode::nll_only) {
      const Trace& tr = trace_for(idx);
      if (mode == AblationMode::nll_align || mode == AblationMode::full) {
        ad::Var align = align_loss_graph(fwd.enc_dec_attn, tr.attn);
        align_sum += align.value().data[0];
        if (cfg_.hint.mu != 0.0) total = ad::add(total, ad::scale(align, cfg_.hint.mu));
      }
      if (mode == AblationMode::full) {
        ad::Var hid = hid_loss_graph(fwd.decoder_hidden, tr.hidden, cfg_.hint);
        hid_sum += hid.value().data[0];
        if (cfg_.hint.lambda != 0.0) total = ad::add(total, ad::scale(hid, cfg_.hint.lambda));
      } else if (mode == AblationMode::nll_l2) {
        ad::Var reg = l2_regression_graph(fwd.decoder_hidden, tr.hidden);
        hid_sum += reg.value().data[0];
        if (cfg_.hint.lambda != 0.0) total = ad::add(total, ad::scale(reg, cfg_.hint.lambda));
      }
    }
    sentence_totals.push_back(total);
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ad::Var loss = ad::scale(ad::add_n(sentence_totals), inv_b);
  const LossBreakdown bd =
      loss_total(nll_sum * inv_b, hid_sum * inv_b, align_sum * inv_b, cfg_.hint);
  last_good_ = student_.params();

  ad::backward(loss);
  adam_step(student_.params(), ctx, cfg_, s, student_.config().d_model);
  ++step_;
  return {s, learning_rate(cfg_, student_.config().d_model, s), bd};
}

void StudentTrainer::run(std::size_t steps, const LogSink& sink) {
  for (std::size_t i = 0; i < steps; ++i) {
    const StepLog log = run_step();
    if (sink) sink(log);
  }
}

const ParamStore& StudentTrainer::last_good_params() const {
  return last_good_ ? *last_good_ : student_.params();
}

TeacherModel train_teacher(const TokenCorpus& corpus, const ModelConfig& model_cfg,
                           const TrainConfig& cfg, const LogSink& sink,
                           const std::string& abort_path,
                           const std::vector<std::string>& vocab) {
  TeacherModel model(model_cfg, derive_seed(cfg.seed, kStreamTeacherInit));
  TeacherTrainer trainer(model, corpus, cfg);
  try {
    trainer.run(cfg.steps, sink);
  } catch (const TrainingError&) {
    if (!abort_path.empty()) {
      Checkpoint rescue = make_teacher_checkpoint(model, trainer.step(), cfg.seed, vocab);
      rescue.params = trainer.last_good_params();
      save_checkpoint(rescue, abort_path);
    }
    throw;
  }
  return model;
}

StudentModel train_student(const TeacherModel& teacher, const DistilledCorpus& corpus,
                           const ModelConfig& model_cfg, const TrainConfig& cfg,
                           const LogSink& sink, const std::string& abort_path,
                           const std::vector<std::string>& vocab) {
  StudentModel model(model_cfg, cfg.tau, derive_seed(cfg.seed, kStreamStudentInit));
  StudentTrainer trainer(model, teacher, corpus, cfg);
  try {
    trainer.run(cfg.steps, sink);
  } catch (const TrainingError&) {
    if (!abort_path.empty()) {
      Checkpoint rescue = make_student_checkpoint(model, trainer.step(), cfg.seed, vocab,
                                                  derive_length_bias(corpus));
      rescue.params = trainer.last_good_params();
      save_checkpoint(rescue, abort_path);
    }
    throw;
  }
  return model;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void copy_params(const ParamStore& from, ParamStore& to, const char* what) {
  if (from.tensors().size() != to.tensors().size()) {
    throw CheckpointShapeError(std::string(what) + ": parameter set mismatch");
  }
  for (auto& [name, dst] : to.tensors()) {
    if (!from.has(name)) {
      throw CheckpointShapeError(std::string(what) + ": missing parameter " + name);
    }
    const ParamTensor& src = from.require(name);
    if (src.shape != dst.shape) {
      throw CheckpointShapeError(std::string(what) + ": shape mismatch for " + name);
    }
    dst.value = src.value;
    dst.adam_m = src.adam_m;
    dst.adam_v = src.adam_v;
  }
}

}  // namespace

Checkpoint make_teacher_checkpoint(const TeacherModel& model, std::uint64_t step,
                                   std::uint64_t seed, const std::vector<std::string>& vocab) {
  Checkpoint c;
  c.kind = "teacher";
  c.model = model.config();
  c.params = model.params();
  c.step = step;
  c.rng_state = seed;
  c.vocab = vocab;
  return c;
}

Checkpoint make_student_checkpoint(const StudentModel& model, std::uint64_t step,
                                   std::uint64_t seed, const std::vector<std::string>& vocab,
                                   int length_bias) {
  Checkpoint c;
  c.kind = "student";
  c.model = model.config();
  c.params = model.params();
  c.step = step;
  c.rng_state = seed;
  c.vocab = vocab;
  c.extra["tau"] = format_double(model.tau());
  c.extra["length_bias"] = std::to_string(length_bias);
  return c;
}

TeacherModel teacher_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "teacher") throw CheckpointError("expected a teacher checkpoint");
  TeacherModel model(ckpt.model, 0);
  copy_params(ckpt.params, model.params(), "teacher checkpoint");
  return model;
}

StudentModel student_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "student") throw CheckpointError("expected a student checkpoint");
  double tau = 0.3;
  auto it = ckpt.extra.find("tau");
  if (it != ckpt.extra.end()) tau = std::stod(it->second);
  StudentModel model(ckpt.model, tau, 0);
  copy_params(ckpt.params, model.params(), "student checkpoint");
  return model;
}

}  // namespace hintnart
