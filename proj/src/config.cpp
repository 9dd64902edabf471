#include "hintnart/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hintnart/errors.hpp"

namespace hintnart {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an unsigned integer, got '" + v + "'");
  }
}

long long to_i64(const std::string& v, const std::string& where) {
  try {
    return std::stoll(v);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an integer, got '" + v + "'");
  }
}

double to_f64(const std::string& v, const std::string& where) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  if (data.len_max > model.max_len) {
    throw ConfigError("data: len_max exceeds the model's max_len");
  }
}

void apply_config_override(RunConfig& cfg, const std::string& section, const std::string& key,
                           const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  if (section == "data") {
    if (key == "vocab_size") cfg.data.vocab_size = to_u64(value, where);
    else if (key == "len_min") cfg.data.len_min = to_u64(value, where);
    else if (key == "len_max") cfg.data.len_max = to_u64(value, where);
    else if (key == "mapping_seed") cfg.data.mapping_seed = to_u64(value, where);
    else if (key == "reorder_window") cfg.data.reorder_window = to_u64(value, where);
    else if (key == "append_every") cfg.data.append_every = to_u64(value, where);
    else if (key == "train_size") cfg.data.train_size = to_u64(value, where);
    else if (key == "valid_size") cfg.data.valid_size = to_u64(value, where);
    else if (key == "test_size") cfg.data.test_size = to_u64(value, where);
    else if (key == "seed") cfg.data.seed = to_u64(value, where);
    else throw ConfigError("unknown key: " + where);
  } else if (section == "model") {
    if (key == "encoder_layers") cfg.model.encoder_layers = to_u64(value, where);
    else if (key == "decoder_layers") cfg.model.decoder_layers = to_u64(value, where);
    else if (key == "heads") cfg.model.heads = to_u64(value, where);
    else if (key == "d_model") cfg.model.d_model = to_u64(value, where);
    else if (key == "d_k") cfg.model.d_k = to_u64(value, where);
    else if (key == "d_v") cfg.model.d_v = to_u64(value, where);
    else if (key == "d_ff") cfg.model.d_ff = to_u64(value, where);
    else if (key == "max_len") cfg.model.max_len = to_u64(value, where);
    else if (key == "scale_by_d_model") cfg.model.scale_by_d_model = to_bool(value, where);
    else throw ConfigError("unknown key: " + where);
  } else if (section == "train") {
    if (key == "steps") cfg.train.steps = to_u64(value, where);
    else if (key == "batch_size") cfg.train.batch_size = to_u64(value, where);
    else if (key == "warmup_steps") cfg.train.warmup_steps = to_u64(value, where);
    else if (key == "lr_scale") cfg.train.lr_scale = to_f64(value, where);
    else if (key == "adam_beta1") cfg.train.adam_beta1 = to_f64(value, where);
    else if (key == "adam_beta2") cfg.train.adam_beta2 = to_f64(value, where);
    else if (key == "adam_eps") cfg.train.adam_eps = to_f64(value, where);
    else if (key == "dropout") cfg.train.dropout = to_f64(value, where);
    else if (key == "clip_norm") cfg.train.clip_norm = to_f64(value, where);
    else if (key == "seed") cfg.train.seed = to_u64(value, where);
    else if (key == "tau") cfg.train.tau = to_f64(value, where);
    else if (key == "ablation") cfg.train.ablation = ablation_from_string(value);
    else if (key == "cache_hints") cfg.train.cache_hints = to_bool(value, where);
    else throw ConfigError("unknown key: " + where);
  } else if (section == "hint") {
    if (key == "gamma_st") cfg.train.hint.gamma_st = to_f64(value, where);
    else if (key == "gamma_tr") cfg.train.hint.gamma_tr = to_f64(value, where);
    else if (key == "lambda") cfg.train.hint.lambda = to_f64(value, where);
    else if (key == "mu") cfg.train.hint.mu = to_f64(value, where);
    else if (key == "eps_ls") cfg.train.hint.eps_ls = to_f64(value, where);
    else if (key == "penalty") {
      if (value == "log_one_minus") cfg.train.hint.penalty = HintConfig::Penalty::log_one_minus;
      else if (value == "exp") cfg.train.hint.penalty = HintConfig::Penalty::exp_similarity;
      else throw ConfigError(where + ": expected log_one_minus or exp");
    } else throw ConfigError("unknown key: " + where);
  } else if (section == "inference") {
    if (key == "length_bias") {
      if (value == "auto") {
        cfg.length_bias_auto = true;
      } else {
        cfg.inference.length_bias = static_cast<int>(to_i64(value, where));
        cfg.length_bias_auto = false;
      }
    } else if (key == "halfwidth") cfg.inference.halfwidth = to_u64(value, where);
    else if (key == "rescore") cfg.inference.rescore = to_bool(value, where);
    else if (key == "normalize_by_length")
      cfg.inference.normalize_by_length = to_bool(value, where);
    else throw ConfigError("unknown key: " + where);
  } else {
    throw ConfigError("unknown section: [" + section + "]");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
    }
    try {
      apply_config_override(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[data]\n";
  os << "vocab_size = " << cfg.data.vocab_size << '\n';
  os << "len_min = " << cfg.data.len_min << '\n';
  os << "len_max = " << cfg.data.len_max << '\n';
  os << "mapping_seed = " << cfg.data.mapping_seed << '\n';
  os << "reorder_window = " << cfg.data.reorder_window << '\n';
  os << "append_every = " << cfg.data.append_every << '\n';
  os << "train_size = " << cfg.data.train_size << '\n';
  os << "valid_size = " << cfg.data.valid_size << '\n';
  os << "test_size = " << cfg.data.test_size << '\n';
  os << "seed = " << cfg.data.seed << '\n';
  os << "\n[model]\n";
  os << "encoder_layers = " << cfg.model.encoder_layers << '\n';
  os << "decoder_layers = " << cfg.model.decoder_layers << '\n';
  os << "heads = " << cfg.model.heads << '\n';
  os << "d_model = " << cfg.model.d_model << '\n';
  os << "d_k = " << cfg.model.d_k << '\n';
  os << "d_v = " << cfg.model.d_v << '\n';
  os << "d_ff = " << cfg.model.d_ff << '\n';
  os << "max_len = " << cfg.model.max_len << '\n';
  os << "scale_by_d_model = " << (cfg.model.scale_by_d_model ? "true" : "false") << '\n';
  os << "\n[train]\n";
  os << "steps = " << cfg.train.steps << '\n';
  os << "batch_size = " << cfg.train.batch_size << '\n';
  os << "warmup_steps = " << cfg.train.warmup_steps << '\n';
  os << "lr_scale = " << fmt(cfg.train.lr_scale) << '\n';
  os << "adam_beta1 = " << fmt(cfg.train.adam_beta1) << '\n';
  os << "adam_beta2 = " << fmt(cfg.train.adam_beta2) << '\n';
  os << "adam_eps = " << fmt(cfg.train.adam_eps) << '\n';
  os << "dropout = " << fmt(cfg.train.dropout) << '\n';
  os << "clip_norm = " << fmt(cfg.train.clip_norm) << '\n';
  os << "seed = " << cfg.train.seed << '\n';
  os << "tau = " << fmt(cfg.train.tau) << '\n';
  os << "ablation = " << to_string(cfg.train.ablation) << '\n';
  os << "cache_hints = " << (cfg.train.cache_hints ? "true" : "false") << '\n';
  os << "\n[hint]\n";
  os << "gamma_st = " << fmt(cfg.train.hint.gamma_st) << '\n';
  os << "gamma_tr = " << fmt(cfg.train.hint.gamma_tr) << '\n';
  os << "lambda = " << fmt(cfg.train.hint.lambda) << '\n';
  os << "mu = " << fmt(cfg.train.hint.mu) << '\n';
  os << "eps_ls = " << fmt(cfg.train.hint.eps_ls) << '\n';
  os << "penalty = "
     << (cfg.train.hint.penalty == HintConfig::Penalty::log_one_minus ? "log_one_minus" : "exp")
     << '\n';
  os << "\n[inference]\n";
  if (cfg.length_bias_auto) {
    os << "length_bias = auto\n";
  } else {
    os << "length_bias = " << cfg.inference.length_bias << '\n';
  }
  os << "halfwidth = " << cfg.inference.halfwidth << '\n';
  os << "rescore = " << (cfg.inference.rescore ? "true" : "false") << '\n';
  os << "normalize_by_length = " << (cfg.inference.normalize_by_length ? "true" : "false")
     << '\n';
  return os.str();
}

}  // namespace hintnart
