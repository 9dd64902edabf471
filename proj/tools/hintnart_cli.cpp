// Command-line front end: data generation, teacher/student training,
// distillation, translation, evaluation, diagnostics and latency benchmarks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hintnart/config.hpp"
#include "hintnart/errors.hpp"
#include "hintnart/evaluation.hpp"
#include "hintnart/inference.hpp"
#include "hintnart/training.hpp"

namespace fs = std::filesystem;
using namespace hintnart;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory: " + dir);
}

std::ofstream open_log(const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot open log file: " + path);
  return os;
}

// Plain token lines; a tab cuts the line to its source column, so corpus
// files work as translate input directly.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open file: " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t tab = line.find('\t');
    if (tab != std::string::npos) line = line.substr(0, tab);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) toks.push_back(t);
    lines.push_back(std::move(toks));
  }
  return lines;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

ModelConfig sized_model(const RunConfig& cfg, std::size_t vocab_size) {
  ModelConfig m = cfg.model;
  m.vocab_src = vocab_size;
  m.vocab_tgt = vocab_size;
  return m;
}

InferenceConfig resolve_inference(const RunConfig& cfg, const Checkpoint& student_ckpt) {
  InferenceConfig inf = cfg.inference;
  if (cfg.length_bias_auto) {
    auto it = student_ckpt.extra.find("length_bias");
    if (it != student_ckpt.extra.end()) inf.length_bias = std::stoi(it->second);
  }
  return inf;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const CorpusTriple triple = generate_synthetic(cfg.data);
  save_corpus(triple.train, out_dir + "/train.tsv");
  save_corpus(triple.valid, out_dir + "/valid.tsv");
  save_corpus(triple.test, out_dir + "/test.tsv");
  std::printf("wrote %zu/%zu/%zu pairs to %s\n", triple.train.pairs.size(),
              triple.valid.pairs.size(), triple.test.pairs.size(), out_dir.c_str());
  return 0;
}

int cmd_train_teacher(const RunConfig& cfg, const std::string& data_path,
                      const std::string& out_dir) {
  ensure_dir(out_dir);
  const Corpus corpus = load_corpus(data_path);
  if (corpus.pairs.empty()) throw InputError("train-teacher: corpus is empty");
  const Vocabulary vocab = build_vocabulary(corpus);
  const TokenCorpus tokens = tokenize_corpus(corpus, vocab);
  const ModelConfig model_cfg = sized_model(cfg, vocab.size());

  std::ofstream log = open_log(out_dir + "/teacher.log");
  const LogSink sink = [&](const StepLog& s) { log << format_log_line(s) << '\n'; };
  const TeacherModel model = train_teacher(tokens, model_cfg, cfg.train, sink,
                                           out_dir + "/teacher.last_good.ckpt",
                                           vocab.tokens());
  const std::string ckpt_path = out_dir + "/teacher.ckpt";
  save_checkpoint(
      make_teacher_checkpoint(model, cfg.train.steps, cfg.train.seed, vocab.tokens()),
      ckpt_path);
  std::printf("teacher checkpoint: %s\n", ckpt_path.c_str());
  return 0;
}

int cmd_distill(const std::string& teacher_path, const std::string& data_path,
                const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(teacher_path);
  const TeacherModel teacher = teacher_from_checkpoint(ckpt);
  const Vocabulary vocab{std::vector<std::string>(ckpt.vocab)};
  const TokenCorpus tokens = tokenize_corpus(load_corpus(data_path), vocab);

  const DistilledCorpus distilled = distill_corpus(teacher, tokens);
  Corpus out;
  out.pairs.reserve(distilled.pairs.size());
  for (const DistilledPair& p : distilled.pairs) {
    SentencePair sp;
    sp.src = vocab.decode(p.src);
    sp.tgt = vocab.decode(p.distilled);
    sp.ref = vocab.decode(p.original);
    out.pairs.push_back(std::move(sp));
  }
  save_corpus(out, out_path);
  std::printf("distilled %zu pairs (%zu dropped) to %s\n", out.pairs.size(), distilled.dropped,
              out_path.c_str());
  return 0;
}

int cmd_train_student(const RunConfig& cfg, const std::string& teacher_path,
                      const std::string& data_path, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Checkpoint tckpt = load_checkpoint(teacher_path);
  const TeacherModel teacher = teacher_from_checkpoint(tckpt);
  const Vocabulary vocab{std::vector<std::string>(tckpt.vocab)};

  const Corpus corpus = load_corpus(data_path);
  DistilledCorpus distilled;
  for (const SentencePair& p : corpus.pairs) {
    DistilledPair dp;
    dp.src = vocab.encode(p.src);
    dp.distilled = vocab.encode(p.tgt);
    dp.original = vocab.encode(p.ref.empty() ? p.tgt : p.ref);
    distilled.pairs.push_back(std::move(dp));
  }

  std::ofstream log = open_log(out_dir + "/student.log");
  const LogSink sink = [&](const StepLog& s) { log << format_log_line(s) << '\n'; };
  const StudentModel model =
      train_student(teacher, distilled, teacher.config(), cfg.train, sink,
                    out_dir + "/student.last_good.ckpt", tckpt.vocab);

  const int bias = derive_length_bias(distilled);
  const std::string ckpt_path = out_dir + "/student.ckpt";
  save_checkpoint(
      make_student_checkpoint(model, cfg.train.steps, cfg.train.seed, tckpt.vocab, bias),
      ckpt_path);
  std::printf("student checkpoint: %s (ablation %s, length bias %+d)\n", ckpt_path.c_str(),
              to_string(cfg.train.ablation).c_str(), bias);
  return 0;
}

int cmd_translate(const RunConfig& cfg, const std::string& student_path,
                  const std::string& teacher_path, const std::string& input_path,
                  const std::string& out_path) {
  const Checkpoint sckpt = load_checkpoint(student_path);
  const StudentModel student = student_from_checkpoint(sckpt);
  const Vocabulary vocab{std::vector<std::string>(sckpt.vocab)};
  const InferenceConfig inf = resolve_inference(cfg, sckpt);

  std::optional<TeacherModel> teacher;
  if (!teacher_path.empty()) {
    teacher.emplace(teacher_from_checkpoint(load_checkpoint(teacher_path)));
  }
  if (inf.rescore && !teacher) {
    throw ConfigError("translate: rescoring needs --teacher (or pass --no-rescore)");
  }

  std::string out;
  for (const auto& toks : read_token_lines(input_path)) {
    if (toks.empty()) {
      out += '\n';
      continue;
    }
    const TranslationResult res =
        translate(vocab.encode(toks), student, teacher ? &*teacher : nullptr, inf);
    out += join(vocab.decode(res.chosen.tokens));
    out += '\n';
  }
  if (out_path.empty()) {
    std::fputs(out.c_str(), stdout);
  } else {
    write_text_file(out_path, out);
    std::printf("translations: %s\n", out_path.c_str());
  }
  return 0;
}

EvalReport build_eval_report(const StudentModel& student, const TeacherModel* teacher,
                             const Vocabulary& vocab, const Corpus& corpus,
                             const InferenceConfig& inf) {
  EvalReport report;
  std::vector<std::vector<std::string>> hyps, refs, hyps_long, refs_long;
  std::vector<SimilarityMatrix> sims;
  double rep_adj = 0.0, rep_any = 0.0;
  std::size_t rep_count = 0;
  std::map<std::string, double> entropy;
  std::size_t entropy_count = 0;

  for (const SentencePair& p : corpus.pairs) {
    const std::vector<int> src = vocab.encode(p.src);
    const TranslationResult res = translate(src, student, teacher, inf);
    const std::vector<std::string> hyp = vocab.decode(res.chosen.tokens);
    hyps.push_back(hyp);
    refs.push_back(p.tgt);
    if (p.src.size() >= report.long_threshold) {
      hyps_long.push_back(hyp);
      refs_long.push_back(p.tgt);
    }
    if (res.chosen.tokens.empty()) {
      ++report.empty_hypotheses;
    } else {
      rep_adj += repetition_rate(res.chosen.tokens);
      rep_any += repetition_rate_any(res.chosen.tokens);
      ++rep_count;
    }
    const StudentTrace trace = student.parallel_decode(src, res.candidates.front().length);
    sims.push_back(similarity_matrix(trace, trace.hidden.size(), "student"));
    for (std::size_t l = 1; l <= trace.attn.size(); ++l) {
      for (std::size_t h = 1; h <= trace.attn[l - 1].shape[0]; ++h) {
        entropy["l" + std::to_string(l) + ".h" + std::to_string(h)] +=
            mean_row_entropy(attention_head(trace, l, h));
      }
    }
    ++entropy_count;
  }

  report.sentences = corpus.pairs.size();
  report.bleu_score = bleu_str(hyps, refs);
  if (!hyps_long.empty()) report.bleu_long = bleu_str(hyps_long, refs_long);
  if (rep_count > 0) {
    report.repetition_adjacent = rep_adj / static_cast<double>(rep_count);
    report.repetition_any = rep_any / static_cast<double>(rep_count);
  }
  if (!sims.empty()) {
    double offdiag = 0.0;
    for (const auto& m : sims) offdiag += mean_offdiagonal(m);
    report.mean_offdiag_similarity = offdiag / static_cast<double>(sims.size());
    report.quantiles = similarity_quantiles(sims);
  }
  for (auto& [key, value] : entropy) {
    report.attention_entropy[key] = value / static_cast<double>(entropy_count);
  }
  return report;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& hyp_path, const std::string& ref_path,
                 const std::string& student_path, const std::string& teacher_path,
                 const std::string& data_path, const std::string& out_path) {
  if (!hyp_path.empty() || !ref_path.empty()) {
    if (hyp_path.empty() || ref_path.empty()) {
      throw ConfigError("evaluate: --hyp and --ref must be given together");
    }
    const double score = bleu_str(read_token_lines(hyp_path), read_token_lines(ref_path));
    std::printf("BLEU\t%.2f\n", score * 100.0);
    return 0;
  }
  if (student_path.empty() || data_path.empty()) {
    throw ConfigError("evaluate: need either --hyp/--ref or --student/--data");
  }
  const Checkpoint sckpt = load_checkpoint(student_path);
  const StudentModel student = student_from_checkpoint(sckpt);
  const Vocabulary vocab{std::vector<std::string>(sckpt.vocab)};
  const InferenceConfig inf = resolve_inference(cfg, sckpt);

  std::optional<TeacherModel> teacher;
  if (!teacher_path.empty()) {
    teacher.emplace(teacher_from_checkpoint(load_checkpoint(teacher_path)));
  }
  if (inf.rescore && !teacher) {
    throw ConfigError("evaluate: rescoring needs --teacher (or set rescore = false)");
  }

  const Corpus corpus = load_corpus(data_path);
  const EvalReport report =
      build_eval_report(student, teacher ? &*teacher : nullptr, vocab, corpus, inf);
  const std::string text = report.to_text();
  std::printf("BLEU\t%.2f\n", report.bleu_score * 100.0);
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) write_text_file(out_path, text);
  return 0;
}

int cmd_diagnose(const RunConfig& cfg, const std::string& teacher_path,
                 const std::string& student_path, const std::string& data_path,
                 std::size_t limit, const std::string& out_dir) {
  ensure_dir(out_dir);
  const TeacherModel teacher = teacher_from_checkpoint(load_checkpoint(teacher_path));
  const Checkpoint sckpt = load_checkpoint(student_path);
  const StudentModel student = student_from_checkpoint(sckpt);
  const Vocabulary vocab{std::vector<std::string>(sckpt.vocab)};
  const InferenceConfig inf = resolve_inference(cfg, sckpt);
  const Corpus corpus = load_corpus(data_path);

  std::vector<SimilarityMatrix> teacher_sims, student_sims;
  std::size_t exported = 0;
  for (std::size_t s = 0; s < corpus.pairs.size(); ++s) {
    const std::vector<int> src = vocab.encode(corpus.pairs[s].src);
    const std::vector<int> t_out = teacher.greedy_decode(src, teacher.config().max_len);
    if (t_out.empty()) continue;
    const DecoderTrace t_trace = teacher.forced_decode(src, t_out);
    const std::size_t s_len = predict_length(src.size(), inf.length_bias);
    const StudentTrace s_trace = student.parallel_decode(src, s_len);

    teacher_sims.push_back(similarity_matrix(t_trace, t_trace.hidden.size(), "teacher"));
    student_sims.push_back(similarity_matrix(s_trace, s_trace.hidden.size(), "student"));

    if (exported < limit) {
      const std::vector<std::string>& src_toks = corpus.pairs[s].src;
      const std::vector<std::string> t_toks = vocab.decode(t_out);
      const std::vector<std::string> s_toks =
          vocab.decode(StudentModel::predict_tokens(s_trace.logits));
      const std::string tag = std::to_string(s);
      for (std::size_t l = 1; l <= t_trace.attn.size(); ++l) {
        for (std::size_t h = 1; h <= t_trace.attn[l - 1].shape[0]; ++h) {
          write_text_file(out_dir + "/teacher_attn_s" + tag + "_l" + std::to_string(l) + "_h" +
                              std::to_string(h) + ".grid",
                          format_grid(attention_head(t_trace, l, h), src_toks, t_toks, l, h,
                                      "teacher"));
          write_text_file(out_dir + "/student_attn_s" + tag + "_l" + std::to_string(l) + "_h" +
                              std::to_string(h) + ".grid",
                          format_grid(attention_head(s_trace, l, h), src_toks, s_toks, l, h,
                                      "student"));
        }
      }
      write_text_file(out_dir + "/teacher_sim_s" + tag + ".grid",
                      format_grid(teacher_sims.back().mat, t_toks, t_toks,
                                  t_trace.hidden.size(), 0, "teacher"));
      write_text_file(out_dir + "/student_sim_s" + tag + ".grid",
                      format_grid(student_sims.back().mat, s_toks, s_toks,
                                  s_trace.hidden.size(), 0, "student"));
      ++exported;
    }
  }

  std::ostringstream os;
  auto emit = [&](const char* tag, const std::vector<SimilarityMatrix>& sims) {
    if (sims.empty()) return;
    double offdiag = 0.0;
    for (const auto& m : sims) offdiag += mean_offdiagonal(m);
    const SimilarityQuantiles q = similarity_quantiles(sims);
    os << tag << "_mean_offdiag_similarity\t" << offdiag / static_cast<double>(sims.size())
       << '\n';
    os << tag << "_similarity_frac_below_0.25\t" << q.frac_below_025 << '\n';
    os << tag << "_similarity_frac_below_0.5\t" << q.frac_below_05 << '\n';
  };
  emit("teacher", teacher_sims);
  emit("student", student_sims);
  write_text_file(out_dir + "/diagnostics.txt", os.str());
  std::fputs(os.str().c_str(), stdout);
  std::printf("grids for %zu sentences in %s\n", exported, out_dir.c_str());
  return 0;
}

int cmd_bench_latency(const RunConfig& cfg, const std::string& teacher_path,
                      const std::string& student_path, const std::string& data_path,
                      std::size_t limit, const std::string& out_path) {
  const TeacherModel teacher = teacher_from_checkpoint(load_checkpoint(teacher_path));
  const Checkpoint sckpt = load_checkpoint(student_path);
  const StudentModel student = student_from_checkpoint(sckpt);
  const Vocabulary vocab{std::vector<std::string>(sckpt.vocab)};
  const InferenceConfig inf = resolve_inference(cfg, sckpt);
  const Corpus corpus = load_corpus(data_path);

  std::vector<std::vector<int>> sources;
  for (const SentencePair& p : corpus.pairs) {
    if (limit && sources.size() >= limit) break;
    sources.push_back(vocab.encode(p.src));
  }
  const LatencyReport report =
      latency_report(teacher, student, sources, inf, teacher.config().max_len);
  const std::string text = to_text(report);
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) write_text_file(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale NMT lab: autoregressive teacher, one-pass parallel student,\n"
               "hint-based training, candidate rescoring and diagnostics."};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;
  bool dump_cfg = false;
  app.add_option("--config", config_path, "Config file ([data]/[model]/[train]/[hint]/[inference])");
  app.add_option("--out", out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Override the data/train seed");
  app.add_flag("--dump-config", dump_cfg, "Print the effective config and exit");

  std::string data_path, teacher_path, student_path, input_path, out_path;
  std::string hyp_path, ref_path, ablation;
  std::size_t limit = 0;
  bool no_rescore = false;
  int halfwidth = -1;
  std::string length_bias_flag;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic parallel corpus");
  auto* tt = app.add_subcommand("train-teacher", "Train the autoregressive teacher");
  tt->add_option("--data", data_path, "Training corpus (src<TAB>tgt)")->required();
  auto* di = app.add_subcommand("distill", "Replace targets with teacher greedy decodes");
  di->add_option("--teacher", teacher_path)->required();
  di->add_option("--data", data_path)->required();
  di->add_option("--out-file", out_path, "Distilled corpus path")->required();
  auto* ts = app.add_subcommand("train-student", "Train the parallel student with hints");
  ts->add_option("--teacher", teacher_path)->required();
  ts->add_option("--data", data_path, "Distilled corpus")->required();
  ts->add_option("--ablation", ablation, "nll | nll_align | full | nll_l2");
  auto* tr = app.add_subcommand("translate", "Decode sources with the student");
  tr->add_option("--student", student_path)->required();
  tr->add_option("--teacher", teacher_path, "Needed for rescoring");
  tr->add_option("--input", input_path, "One source sentence per line")->required();
  tr->add_option("--out-file", out_path, "Write translations here (default stdout)");
  tr->add_flag("--no-rescore", no_rescore, "Single-length decode, no teacher rescoring");
  tr->add_option("--halfwidth", halfwidth, "Candidate halfwidth B");
  tr->add_option("--length-bias", length_bias_flag, "Length bias C (integer or 'auto')");
  auto* ev = app.add_subcommand("evaluate", "BLEU, repetition and similarity metrics");
  ev->add_option("--hyp", hyp_path, "Hypothesis token lines (with --ref)");
  ev->add_option("--ref", ref_path, "Reference token lines");
  ev->add_option("--student", student_path);
  ev->add_option("--teacher", teacher_path);
  ev->add_option("--data", data_path, "Test corpus (src<TAB>ref)");
  ev->add_option("--out-file", out_path, "Write the structured report here");
  ev->add_flag("--no-rescore", no_rescore);
  ev->add_option("--halfwidth", halfwidth);
  ev->add_option("--length-bias", length_bias_flag);
  auto* dg = app.add_subcommand("diagnose", "Attention grids and similarity statistics");
  dg->add_option("--teacher", teacher_path)->required();
  dg->add_option("--student", student_path)->required();
  dg->add_option("--data", data_path)->required();
  dg->add_option("--limit", limit, "Sentences to export grids for (default 4)");
  auto* bl = app.add_subcommand("bench-latency", "Batch-1 decode latency comparison");
  bl->add_option("--teacher", teacher_path)->required();
  bl->add_option("--student", student_path)->required();
  bl->add_option("--data", data_path)->required();
  bl->add_option("--limit", limit, "Cap the number of sentences");
  bl->add_option("--out-file", out_path, "Write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    if (seed_opt->count() > 0) {
      cfg.train.seed = seed;
      cfg.data.seed = seed;
    }
    if (no_rescore) cfg.inference.rescore = false;
    if (halfwidth >= 0) cfg.inference.halfwidth = static_cast<std::size_t>(halfwidth);
    if (!length_bias_flag.empty()) {
      if (length_bias_flag == "auto") {
        cfg.length_bias_auto = true;
      } else {
        cfg.inference.length_bias = std::stoi(length_bias_flag);
        cfg.length_bias_auto = false;
      }
    }
    cfg.validate();

    if (dump_cfg) {
      std::fputs(dump_config(cfg).c_str(), stdout);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::fputs(app.help().c_str(), stderr);
      return 1;
    }
    if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
    if (tt->parsed()) return cmd_train_teacher(cfg, data_path, out_dir);
    if (di->parsed()) return cmd_distill(teacher_path, data_path, out_path);
    if (ts->parsed()) {
      if (!ablation.empty()) cfg.train.ablation = ablation_from_string(ablation);
      return cmd_train_student(cfg, teacher_path, data_path, out_dir);
    }
    if (tr->parsed()) return cmd_translate(cfg, student_path, teacher_path, input_path, out_path);
    if (ev->parsed()) {
      return cmd_evaluate(cfg, hyp_path, ref_path, student_path, teacher_path, data_path,
                          out_path);
    }
    if (dg->parsed()) {
      return cmd_diagnose(cfg, teacher_path, student_path, data_path, limit ? limit : 4,
                          out_dir);
    }
    if (bl->parsed()) {
      return cmd_bench_latency(cfg, teacher_path, student_path, data_path, limit, out_path);
    }
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
