#include "hintnart/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_set>

#include "hintnart/errors.hpp"
#include "hintnart/losses.hpp"

namespace hintnart {

namespace {

constexpr std::size_t kMaxOrder = 4;

template <typename Token>
double bleu_impl(const std::vector<std::vector<Token>>& hyps,
                 const std::vector<std::vector<Token>>& refs) {
  if (hyps.empty()) throw InputError("bleu: empty hypothesis set");
  if (hyps.size() != refs.size()) throw InputError("bleu: hypothesis/reference count mismatch");

  double num[kMaxOrder] = {0, 0, 0, 0};
  double den[kMaxOrder] = {0, 0, 0, 0};
  std::size_t hyp_len = 0, ref_len = 0;

  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& hyp = hyps[s];
    const auto& ref = refs[s];
    if (ref.empty()) throw InputError("bleu: empty reference");
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      if (hyp.size() < n) break;
      std::map<std::vector<Token>, std::size_t> hyp_counts, ref_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        ++hyp_counts[std::vector<Token>(hyp.begin() + i, hyp.begin() + i + n)];
      }
      for (std::size_t i = 0; i + n <= ref.size(); ++i) {
        ++ref_counts[std::vector<Token>(ref.begin() + i, ref.begin() + i + n)];
      }
      den[n - 1] += static_cast<double>(hyp.size() - n + 1);
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        const std::size_t clip = it == ref_counts.end() ? 0 : it->second;
        num[n - 1] += static_cast<double>(std::min(count, clip));
      }
    }
  }

  if (hyp_len == 0) return 0.0;

  // n-gram orders the hypothesis corpus cannot form are dropped
  std::vector<std::size_t> orders;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (den[n] > 0.0) orders.push_back(n);
  }
  if (orders.empty()) return 0.0;

  bool smooth = false;
  for (std::size_t n : orders) {
    if (n >= 1 && num[n] == 0.0) smooth = true;
  }

  double log_sum = 0.0;
  for (std::size_t n : orders) {
    double p;
    if (n >= 1 && smooth) {
      p = (num[n] + 1.0) / (den[n] + 1.0);
    } else {
      p = num[n] / den[n];
    }
    if (p <= 0.0) return 0.0;  // unigram precision 0
    log_sum += std::log(p);
  }
  const double geo = std::exp(log_sum / static_cast<double>(orders.size()));
  const double bp = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return geo * bp;
}

}  // namespace

double bleu(const std::vector<std::vector<int>>& hypotheses,
            const std::vector<std::vector<int>>& references) {
  return bleu_impl(hypotheses, references);
}

double bleu_str(const std::vector<std::vector<std::string>>& hypotheses,
                const std::vector<std::vector<std::string>>& references) {
  return bleu_impl(hypotheses, references);
}

double repetition_rate(const std::vector<int>& tokens) {
  if (tokens.empty()) throw ContractError("repetition_rate: empty token list");
  std::size_t dup = 0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    if (tokens[t] == tokens[t - 1]) ++dup;
  }
  return static_cast<double>(dup) / static_cast<double>(tokens.size());
}

double repetition_rate_any(const std::vector<int>& tokens) {
  if (tokens.empty()) throw ContractError("repetition_rate: empty token list");
  std::unordered_set<int> seen;
  std::size_t dup = 0;
  for (int t : tokens) {
    if (!seen.insert(t).second) ++dup;
  }
  return static_cast<double>(dup) / static_cast<double>(tokens.size());
}

SimilarityMatrix similarity_matrix(const DecoderTrace& trace, std::size_t layer,
                                   const std::string& model_tag) {
  if (layer < 1 || layer > trace.hidden.size()) {
    throw InputError("similarity_matrix: layer out of range");
  }
  SimilarityMatrix m;
  m.mat = cosine_matrix_value(trace.hidden[layer - 1]);
  m.layer = layer;
  m.model_tag = model_tag;
  return m;
}

double mean_offdiagonal(const SimilarityMatrix& m) {
  const std::size_t t = m.mat.shape[0];
  if (t < 2) return 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) {
      sum += m.mat.at(i, j);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

SimilarityQuantiles similarity_quantiles(const std::vector<SimilarityMatrix>& matrices) {
  if (matrices.empty()) throw InputError("similarity_quantiles: no matrices");
  std::vector<double> values;
  for (const SimilarityMatrix& m : matrices) {
    const std::size_t t = m.mat.shape[0];
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = i + 1; j < t; ++j) values.push_back(m.mat.at(i, j));
    }
  }
  SimilarityQuantiles q;
  q.count = values.size();
  if (values.empty()) {
    q.grid.assign(21, 0.0);
    return q;
  }
  std::sort(values.begin(), values.end());
  std::size_t below25 = 0, below50 = 0;
  for (double v : values) {
    if (v < 0.25) ++below25;
    if (v < 0.5) ++below50;
  }
  q.frac_below_025 = static_cast<double>(below25) / static_cast<double>(values.size());
  q.frac_below_05 = static_cast<double>(below50) / static_cast<double>(values.size());
  q.grid.resize(21);
  for (std::size_t k = 0; k <= 20; ++k) {
    const double pos = static_cast<double>(k) / 20.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    q.grid[k] = values[lo] * (1.0 - frac) + values[hi] * frac;
  }
  return q;
}

NdArray attention_head(const DecoderTrace& trace, std::size_t layer, std::size_t head) {
  if (layer < 1 || layer > trace.attn.size()) {
    throw InputError("attention_head: layer out of range");
  }
  const NdArray& a = trace.attn[layer - 1];  // [H, T_y, T_x]
  if (head < 1 || head > a.shape[0]) throw InputError("attention_head: head out of range");
  const std::size_t t_y = a.shape[1], t_x = a.shape[2];
  NdArray out({t_y, t_x});
  for (std::size_t i = 0; i < t_y; ++i) {
    for (std::size_t j = 0; j < t_x; ++j) out.at(i, j) = a.at(head - 1, i, j);
  }
  return out;
}

double mean_row_entropy(const NdArray& rows) {
  if (rows.rank() != 2) throw DimensionError("mean_row_entropy: rank-2 input required");
  const std::size_t r = rows.shape[0], c = rows.shape[1];
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = rows.at(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return total / static_cast<double>(r);
}

std::string format_grid(const NdArray& mat, const std::vector<std::string>& col_tokens,
                        const std::vector<std::string>& row_tokens, std::size_t layer,
                        std::size_t head, const std::string& model_tag) {
  if (mat.rank() != 2) throw DimensionError("format_grid: rank-2 matrix required");
  const std::size_t rows = mat.shape[0], cols = mat.shape[1];
  if (row_tokens.size() != rows || col_tokens.size() != cols) {
    throw DimensionError("format_grid: token label counts must match the matrix");
  }
  std::ostringstream os;
  os << "# rows=" << rows << " cols=" << cols << " layer=" << layer << " head=" << head
     << " model=" << model_tag << '\n';
  for (std::size_t j = 0; j < cols; ++j) {
    if (j) os << '\t';
    os << col_tokens[j];
  }
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    os << row_tokens[i];
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", mat.at(i, j));
      os << '\t' << buf;
    }
    os << '\n';
  }
  return os.str();
}

ParsedGrid parse_grid(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("grid: missing header");
  ParsedGrid g;
  {
    std::istringstream hs(line);
    std::string hash, field;
    hs >> hash;
    if (hash != "#") throw ParseError("grid: header must start with '#'");
    while (hs >> field) {
      const std::size_t eq = field.find('=');
      if (eq == std::string::npos) throw ParseError("grid: malformed header field " + field);
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "rows") g.rows = std::stoull(value);
      else if (key == "cols") g.cols = std::stoull(value);
      else if (key == "layer") g.layer = std::stoull(value);
      else if (key == "head") g.head = std::stoull(value);
      else if (key == "model") g.model_tag = value;
      else throw ParseError("grid: unknown header field " + key);
    }
  }
  if (!std::getline(is, line)) throw ParseError("grid: missing column token line");
  {
    std::istringstream ts(line);
    std::string tok;
    while (std::getline(ts, tok, '\t')) g.col_tokens.push_back(tok);
  }
  if (g.col_tokens.size() != g.cols) throw ParseError("grid: column token count mismatch");
  g.values = NdArray({g.rows, g.cols});
  for (std::size_t i = 0; i < g.rows; ++i) {
    if (!std::getline(is, line)) throw ParseError("grid: missing value row");
    std::istringstream ls(line);
    std::string cell;
    if (!std::getline(ls, cell, '\t')) throw ParseError("grid: missing row token");
    g.row_tokens.push_back(cell);
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (!std::getline(ls, cell, '\t')) throw ParseError("grid: missing value cell");
      g.values.at(i, j) = std::stod(cell);
    }
  }
  return g;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "bleu\t" << bleu_score << '\n';
  os << "bleu_x100\t" << bleu_score * 100.0 << '\n';
  if (bleu_long >= 0.0) {
    os << "bleu_long\t" << bleu_long << '\n';
    os << "bleu_long_threshold\t" << long_threshold << '\n';
  }
  os << "repetition_adjacent\t" << repetition_adjacent << '\n';
  os << "repetition_any\t" << repetition_any << '\n';
  os << "sentences\t" << sentences << '\n';
  os << "empty_hypotheses\t" << empty_hypotheses << '\n';
  if (mean_offdiag_similarity > -2.0) {
    os << "mean_offdiag_similarity\t" << mean_offdiag_similarity << '\n';
    os << "similarity_frac_below_0.25\t" << quantiles.frac_below_025 << '\n';
    os << "similarity_frac_below_0.5\t" << quantiles.frac_below_05 << '\n';
    for (std::size_t k = 0; k < quantiles.grid.size(); ++k) {
      os << "similarity_q" << (k * 5) << '\t' << quantiles.grid[k] << '\n';
    }
  }
  for (const auto& [key, value] : attention_entropy) {
    os << "attention_entropy_" << key << '\t' << value << '\n';
  }
  return os.str();
}

}  // namespace hintnart
