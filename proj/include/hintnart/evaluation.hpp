#pragma once

#include <map>
#include <string>
#include <vector>

#include "hintnart/ndarray.hpp"
#include "hintnart/teacher.hpp"

namespace hintnart {

// Corpus-level BLEU-4 in [0, 1]: modified n-gram precisions with clipping,
// n dropped when the hypothesis corpus has no n-grams of that order, add-one
// smoothing on the n >= 2 precisions when any of them is zero, brevity
// penalty exp(min(0, 1 - r/c)).
double bleu(const std::vector<std::vector<int>>& hypotheses,
            const std::vector<std::vector<int>>& references);
double bleu_str(const std::vector<std::vector<std::string>>& hypotheses,
                const std::vector<std::vector<std::string>>& references);

// Fraction of tokens equal to their immediate predecessor.
double repetition_rate(const std::vector<int>& tokens);
// Secondary variant: fraction of tokens that duplicate any earlier token.
double repetition_rate_any(const std::vector<int>& tokens);

struct SimilarityMatrix {
  NdArray mat;  // [T_y, T_y], symmetric, unit diagonal
  std::size_t layer = 0;
  std::string model_tag;
};

// layer is 1-based; pass trace.hidden.size() for the last layer.
SimilarityMatrix similarity_matrix(const DecoderTrace& trace, std::size_t layer,
                                   const std::string& model_tag);

double mean_offdiagonal(const SimilarityMatrix& m);

struct SimilarityQuantiles {
  double frac_below_025 = 0.0;
  double frac_below_05 = 0.0;
  std::vector<double> grid;  // 21 quantiles, 0% to 100% in 5% steps
  std::size_t count = 0;     // strict-upper-triangle entries aggregated
};
SimilarityQuantiles similarity_quantiles(const std::vector<SimilarityMatrix>& matrices);

// [T_y, T_x] attention rows of one head; layer/head are 1-based.
NdArray attention_head(const DecoderTrace& trace, std::size_t layer, std::size_t head);

// Mean Shannon entropy (nats) of the rows of a row-stochastic matrix.
double mean_row_entropy(const NdArray& rows);

// Grid text format:
//   # rows=<T_y> cols=<T_x> layer=<l> head=<h> model=<tag>
//   <tab-separated source tokens>
//   <target_token>\t<v1>\t<v2>...   (6-decimal fixed point)
std::string format_grid(const NdArray& mat, const std::vector<std::string>& col_tokens,
                        const std::vector<std::string>& row_tokens, std::size_t layer,
                        std::size_t head, const std::string& model_tag);

struct ParsedGrid {
  std::size_t rows = 0, cols = 0, layer = 0, head = 0;
  std::string model_tag;
  std::vector<std::string> col_tokens;
  std::vector<std::string> row_tokens;
  NdArray values;
};
ParsedGrid parse_grid(const std::string& text);

struct EvalReport {
  double bleu_score = 0.0;       // [0, 1]
  double bleu_long = -1.0;       // sources >= long_threshold; -1 when absent
  std::size_t long_threshold = 10;
  double repetition_adjacent = 0.0;
  double repetition_any = 0.0;
  std::size_t sentences = 0;
  std::size_t empty_hypotheses = 0;
  double mean_offdiag_similarity = -2.0;  // -2 when no traces were supplied
  SimilarityQuantiles quantiles;
  std::map<std::string, double> attention_entropy;  // "l<layer>.h<head>" -> nats

  std::string to_text() const;  // key<TAB>value lines
};

}  // namespace hintnart
