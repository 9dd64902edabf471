#pragma once

#include <vector>

#include "hintnart/autodiff.hpp"
#include "hintnart/ndarray.hpp"

namespace hintnart {

// Numerical guards: the log argument in the pairwise penalty never drops
// below kPhiClamp, and student attention probabilities are floored at
// kKlFloor inside the KL.
inline constexpr double kPhiClamp = 1e-7;
inline constexpr double kKlFloor = 1e-9;

struct HintConfig {
  double gamma_st = 0.1;  // student similarity threshold, in [-1, 1]
  double gamma_tr = 0.9;  // teacher similarity threshold, in [-1, 1]
  double lambda = 5.0;    // weight of the hidden-state loss
  double mu = 1.0;        // weight of the alignment loss
  double eps_ls = 0.1;    // label smoothing

  // -log(1 - d_st) is the default penalty; exp(d_st) gave similar results
  // and is kept as an option.
  enum class Penalty { log_one_minus, exp_similarity };
  Penalty penalty = Penalty::log_one_minus;

  void validate() const;
};

struct LossBreakdown {
  double nll = 0.0;
  double hid = 0.0;
  double align = 0.0;
  double total = 0.0;
};

// cos(u, v), clamped to [-1, 1]. Zero-norm input yields 0 and sets the
// degenerate flag; callers treat that pair as inactive.
double cosine(const double* u, const double* v, std::size_t n, bool* degenerate = nullptr);
double cosine(const NdArray& u, const NdArray& v, bool* degenerate = nullptr);

// Pairwise penalty: charges -log(1 - d_st) when the student pair is similar
// (d_st >= gamma_st) while the teacher pair is not (d_tr <= gamma_tr).
double phi(double d_st, double d_tr, const HintConfig& cfg);

NdArray cosine_matrix_value(const NdArray& rows);

// Graph builders. Teacher-side inputs are plain arrays, so hints are
// structurally detached: no gradient can reach the teacher.
ad::Var nll_loss_graph(const ad::Var& logits, const std::vector<int>& tgt, double eps_ls,
                       const std::vector<bool>* pad = nullptr);
ad::Var hid_loss_graph(const std::vector<ad::Var>& student_hidden,
                       const std::vector<NdArray>& teacher_hidden, const HintConfig& cfg);
ad::Var align_loss_graph(const std::vector<ad::Var>& student_attn,
                         const std::vector<NdArray>& teacher_attn);
// Direct hidden-state regression; known to hurt training, kept only as the
// ablation harness's negative control.
ad::Var l2_regression_graph(const std::vector<ad::Var>& student_hidden,
                            const std::vector<NdArray>& teacher_hidden);

// Value-level entry points (evaluate the graphs on constant leaves).
double loss_nll(const NdArray& logits, const std::vector<int>& tgt, double eps_ls,
                const std::vector<bool>* pad = nullptr);
double loss_hid(const std::vector<NdArray>& student_hidden,
                const std::vector<NdArray>& teacher_hidden, const HintConfig& cfg);
double loss_align(const std::vector<NdArray>& student_attn,
                  const std::vector<NdArray>& teacher_attn);

// total = nll + lambda*hid + mu*align; throws TrainingError with a diagnostic
// dump if any component is non-finite.
LossBreakdown loss_total(double nll, double hid, double align, const HintConfig& cfg);

}  // namespace hintnart
