#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hintnart/errors.hpp"
#include "hintnart/training.hpp"
#include "testutil.hpp"

using namespace hintnart;
namespace tu = testutil;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.vocab_src = 12;
  cfg.vocab_tgt = 12;
  cfg.max_len = 24;
  return cfg;
}

TrainConfig quick_train(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 4;
  cfg.warmup_steps = 40;
  cfg.dropout = 0.1;
  cfg.seed = 5;
  return cfg;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.tensors().size() != b.tensors().size()) return false;
  for (const auto& [name, ta] : a.tensors()) {
    if (!b.has(name)) return false;
    const ParamTensor& tb = b.require(name);
    if (ta.shape != tb.shape || ta.value != tb.value || ta.adam_m != tb.adam_m ||
        ta.adam_v != tb.adam_v) {
      return false;
    }
  }
  return true;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("learning rate follows the warmup schedule exactly") {
  TrainConfig cfg;
  cfg.lr_scale = 2.0;
  cfg.warmup_steps = 400;
  const std::size_t d = 32;
  for (std::size_t s : {std::size_t{1}, std::size_t{10}, std::size_t{400}, std::size_t{4000}}) {
    const double want = 2.0 * std::pow(32.0, -0.5) *
                        std::min(std::pow(double(s), -0.5),
                                 double(s) * std::pow(400.0, -1.5));
    CHECK(learning_rate(cfg, d, s) == want);
  }
}

TEST_CASE("one step on one pair reduces that pair's loss") {
  Rng rng(1);
  TokenCorpus corpus = tu::toy_corpus(rng, 1, 12, 4, 4);
  TeacherModel model(tiny_config(), 77);

  TrainConfig cfg = quick_train(1);
  cfg.batch_size = 1;
  cfg.dropout = 0.0;  // evaluate the same deterministic objective
  cfg.lr_scale = 0.5;

  auto eval_loss = [&]() {
    GraphCtx ctx{&model.params()};
    std::vector<int> tgt = corpus[0].tgt;
    tgt.push_back(kEosId);
    auto fwd = model.forced_forward(ctx, corpus[0].src, tgt);
    return nll_loss_graph(fwd.logits, tgt, cfg.hint.eps_ls).value().data[0];
  };

  const double before = eval_loss();
  TeacherTrainer trainer(model, corpus, cfg);
  trainer.run_step();
  const double after = eval_loss();
  CHECK(after < before);
}

TEST_CASE("same seed twice gives identical parameters") {
  Rng rng(2);
  const TokenCorpus corpus = tu::toy_corpus(rng, 12, 12, 3, 6);
  const TrainConfig cfg = quick_train(25);
  const TeacherModel a = train_teacher(corpus, tiny_config(), cfg);
  const TeacherModel b = train_teacher(corpus, tiny_config(), cfg);
  CHECK(stores_equal(a.params(), b.params()));
}

TEST_CASE("student nll-only mode matches a zero-weight full run bit for bit") {
  Rng rng(3);
  const TokenCorpus corpus = tu::toy_corpus(rng, 10, 12, 3, 5);
  TrainConfig tcfg = quick_train(30);
  const TeacherModel teacher = train_teacher(corpus, tiny_config(), tcfg);
  const DistilledCorpus distilled = distill_corpus(teacher, corpus);
  REQUIRE(distilled.pairs.size() > 4);

  TrainConfig nll_cfg = quick_train(15);
  nll_cfg.ablation = AblationMode::nll_only;

  TrainConfig zero_cfg = quick_train(15);
  zero_cfg.ablation = AblationMode::full;
  zero_cfg.hint.lambda = 0.0;
  zero_cfg.hint.mu = 0.0;

  StudentModel s1(teacher.config(), nll_cfg.tau, derive_seed(nll_cfg.seed, kStreamStudentInit));
  StudentTrainer t1(s1, teacher, distilled, nll_cfg);
  std::vector<double> curve1;
  for (int i = 0; i < 15; ++i) curve1.push_back(t1.run_step().loss.nll);
  CHECK(t1.hint_trace_evaluations() == 0);

  StudentModel s2(teacher.config(), zero_cfg.tau, derive_seed(zero_cfg.seed, kStreamStudentInit));
  StudentTrainer t2(s2, teacher, distilled, zero_cfg);
  std::vector<double> curve2;
  for (int i = 0; i < 15; ++i) curve2.push_back(t2.run_step().loss.nll);
  CHECK(t2.hint_trace_evaluations() > 0);  // hints evaluated, weights zero

  CHECK(curve1 == curve2);
  CHECK(stores_equal(s1.params(), s2.params()));
}

TEST_CASE("teacher parameters are frozen during student training") {
  Rng rng(4);
  const TokenCorpus corpus = tu::toy_corpus(rng, 8, 12, 3, 5);
  TrainConfig tcfg = quick_train(20);
  const TeacherModel teacher = train_teacher(corpus, tiny_config(), tcfg);
  const ParamStore before = teacher.params();

  const DistilledCorpus distilled = distill_corpus(teacher, corpus);
  TrainConfig scfg = quick_train(10);
  train_student(teacher, distilled, teacher.config(), scfg);
  CHECK(stores_equal(before, teacher.params()));
}

TEST_CASE("distillation on an overfit copy task reproduces its targets") {
  Rng rng(6);
  const TokenCorpus corpus = tu::toy_corpus(rng, 6, 12, 3, 3);  // copy task
  TrainConfig cfg = quick_train(600);
  cfg.dropout = 0.0;
  cfg.warmup_steps = 20;
  const TeacherModel teacher = train_teacher(corpus, tiny_config(), cfg);

  const DistilledCorpus d1 = distill_corpus(teacher, corpus);
  CHECK(d1.pairs.size() + d1.dropped == corpus.size());
  CHECK(d1.pairs.size() <= corpus.size());

  std::size_t exact = 0;
  for (std::size_t i = 0; i < d1.pairs.size(); ++i) {
    if (d1.pairs[i].distilled == d1.pairs[i].original) ++exact;
  }
  CHECK(exact == d1.pairs.size());  // converged special case

  const DistilledCorpus d2 = distill_corpus(teacher, corpus);
  REQUIRE(d1.pairs.size() == d2.pairs.size());
  for (std::size_t i = 0; i < d1.pairs.size(); ++i) {
    CHECK(d1.pairs[i].distilled == d2.pairs[i].distilled);
  }
}

TEST_CASE("checkpoint round trip is bit-exact and resume reproduces the curve") {
  Rng rng(7);
  const TokenCorpus corpus = tu::toy_corpus(rng, 10, 12, 3, 5);
  const ModelConfig mcfg = tiny_config();
  TrainConfig cfg = quick_train(20);

  // uninterrupted run
  TeacherModel full(mcfg, derive_seed(cfg.seed, kStreamTeacherInit));
  TeacherTrainer full_trainer(full, corpus, cfg);
  std::vector<std::string> full_curve;
  for (int i = 0; i < 20; ++i) full_curve.push_back(format_log_line(full_trainer.run_step()));

  // interrupted at step 10
  TeacherModel half(mcfg, derive_seed(cfg.seed, kStreamTeacherInit));
  TeacherTrainer half_trainer(half, corpus, cfg);
  std::vector<std::string> resumed_curve;
  for (int i = 0; i < 10; ++i) resumed_curve.push_back(format_log_line(half_trainer.run_step()));

  const std::string path = temp_path("hintnart_test_teacher.ckpt");
  save_checkpoint(make_teacher_checkpoint(half, half_trainer.step(), cfg.seed, {"<pad>", "<bos>", "<eos>", "<unk>"}),
                  path);

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.kind == "teacher");
  CHECK(loaded.step == 10);
  TeacherModel restored = teacher_from_checkpoint(loaded);
  CHECK(stores_equal(restored.params(), half.params()));

  // forward bit-identity after the round trip
  const std::vector<int> probe{4, 5, 6};
  CHECK(bit_equal(restored.encode(probe), half.encode(probe)));

  TeacherTrainer resumed(restored, corpus, cfg);
  resumed.set_step(loaded.step);
  for (int i = 0; i < 10; ++i) resumed_curve.push_back(format_log_line(resumed.run_step()));
  CHECK(resumed_curve == full_curve);
  CHECK(stores_equal(restored.params(), full.params()));
}

TEST_CASE("checkpoint loader rejects damaged files with distinct errors") {
  Rng rng(8);
  TeacherModel model(tiny_config(), 11);
  const std::string path = temp_path("hintnart_test_damage.ckpt");
  save_checkpoint(make_teacher_checkpoint(model, 1, 1, {"<pad>", "<bos>", "<eos>", "<unk>"}),
                  path);

  auto slurp = [&]() {
    std::ifstream is(path, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return s;
  };
  auto spit = [&](const std::string& s) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  };

  const std::string good = slurp();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  spit(bad_magic);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointMagicError);

  std::string bad_version = good;
  bad_version[4] = 9;
  spit(bad_version);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);

  spit(good.substr(0, good.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointTruncatedError);

  spit(good.substr(0, 100));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  // a teacher checkpoint is not a student checkpoint
  spit(good);
  CHECK_THROWS_AS(student_from_checkpoint(load_checkpoint(path)), CheckpointError);
}

TEST_CASE("divergence aborts with a last-good checkpoint") {
  Rng rng(9);
  const TokenCorpus corpus = tu::toy_corpus(rng, 6, 12, 3, 4);
  TrainConfig cfg = quick_train(200);
  cfg.lr_scale = 1e18;  // guaranteed blow-up
  cfg.clip_norm = 0.0;

  const std::string path = temp_path("hintnart_test_lastgood.ckpt");
  std::remove(path.c_str());
  CHECK_THROWS_AS(train_teacher(corpus, tiny_config(), cfg, nullptr, path), TrainingError);
  const Checkpoint rescued = load_checkpoint(path);
  CHECK(rescued.kind == "teacher");
  // the rescued parameters are finite
  for (const auto& [name, t] : rescued.params.tensors()) {
    for (float v : t.value) CHECK(std::isfinite(v));
  }
}

TEST_CASE("training log lines carry all four loss scalars") {
  Rng rng(10);
  const TokenCorpus corpus = tu::toy_corpus(rng, 6, 12, 3, 4);
  TrainConfig cfg = quick_train(2);
  std::vector<StepLog> logs;
  train_teacher(corpus, tiny_config(), cfg, [&](const StepLog& s) { logs.push_back(s); });
  REQUIRE(logs.size() == 2);
  CHECK(logs[0].step == 1);
  CHECK(logs[1].step == 2);
  const std::string line = format_log_line(logs[0]);
  // step, lr, nll, hid, align, total
  CHECK(std::count(line.begin(), line.end(), '\t') == 5);
  CHECK(logs[0].loss.total == logs[0].loss.nll);
}

TEST_CASE("student trainer rejects mismatched teacher/student skeletons") {
  Rng rng(11);
  const TokenCorpus corpus = tu::toy_corpus(rng, 6, 12, 3, 4);
  TrainConfig cfg = quick_train(5);
  const TeacherModel teacher = train_teacher(corpus, tiny_config(), cfg);
  const DistilledCorpus distilled = distill_corpus(teacher, corpus);

  ModelConfig other = tiny_config();
  other.decoder_layers = 2;
  StudentModel student(other, cfg.tau, 1);
  CHECK_THROWS_AS(StudentTrainer(student, teacher, distilled, cfg), ConfigError);
}

TEST_CASE("ablation mode names round-trip") {
  for (AblationMode m : {AblationMode::nll_only, AblationMode::nll_align, AblationMode::full,
                         AblationMode::nll_l2}) {
    CHECK(ablation_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(ablation_from_string("bogus"), ConfigError);
}
