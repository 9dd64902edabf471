#include "hintnart/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hintnart/errors.hpp"
#include "hintnart/kernels.hpp"

namespace hintnart {

void HintConfig::validate() const {
  if (gamma_st < -1.0 || gamma_st > 1.0 || gamma_tr < -1.0 || gamma_tr > 1.0) {
    throw ConfigError("hint: thresholds must lie in [-1, 1]");
  }
  if (lambda < 0.0 || mu < 0.0) throw ConfigError("hint: loss weights must be >= 0");
  if (eps_ls < 0.0 || eps_ls >= 1.0) throw ConfigError("hint: eps_ls must lie in [0, 1)");
}

double cosine(const double* u, const double* v, std::size_t n, bool* degenerate) {
  const auto& kb = kernels::active();
  const double nu = std::sqrt(kb.sqsum(u, n));
  const double nv = std::sqrt(kb.sqsum(v, n));
  if (degenerate) *degenerate = false;
  if (nu == 0.0 || nv == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return std::clamp(kb.dot(u, v, n) / (nu * nv), -1.0, 1.0);
}

double cosine(const NdArray& u, const NdArray& v, bool* degenerate) {
  if (u.numel() != v.numel()) throw DimensionError("cosine: length mismatch");
  return cosine(u.data.data(), v.data.data(), u.numel(), degenerate);
}

double phi(double d_st, double d_tr, const HintConfig& cfg) {
  if (d_st < -1.0 || d_st > 1.0 || d_tr < -1.0 || d_tr > 1.0) {
    throw ContractError("phi: similarities must lie in [-1, 1]");
  }
  if (d_st < cfg.gamma_st || d_tr > cfg.gamma_tr) return 0.0;
  if (cfg.penalty == HintConfig::Penalty::exp_similarity) return std::exp(d_st);
  return -std::log(1.0 - std::min(d_st, 1.0 - kPhiClamp));
}

NdArray cosine_matrix_value(const NdArray& rows) {
  return ad::cosine_matrix(ad::constant(rows)).value();
}

ad::Var nll_loss_graph(const ad::Var& logits, const std::vector<int>& tgt, double eps_ls,
                       const std::vector<bool>* pad) {
  const NdArray& lv = logits.value();
  if (lv.rank() != 2 || lv.shape[0] != tgt.size()) {
    throw DimensionError("nll: logits rows must match target length");
  }
  const std::size_t t_len = tgt.size(), v = lv.shape[1];
  std::size_t live = 0;
  NdArray smooth({t_len, v});
  for (std::size_t t = 0; t < t_len; ++t) {
    if (pad && (*pad)[t]) continue;
    ++live;
    if (tgt[t] < 0 || static_cast<std::size_t>(tgt[t]) >= v) {
      throw InputError("nll: target id out of vocabulary");
    }
    for (std::size_t i = 0; i < v; ++i) {
      smooth.at(t, i) = eps_ls / static_cast<double>(v);
    }
    smooth.at(t, static_cast<std::size_t>(tgt[t])) += 1.0 - eps_ls;
  }
  if (live == 0) throw InputError("nll: all target positions are padding");
  ad::Var ce = ad::sum_all(ad::mul_const(ad::log_softmax(logits), smooth));
  return ad::scale(ce, -1.0 / static_cast<double>(live));
}

ad::Var hid_loss_graph(const std::vector<ad::Var>& student_hidden,
                       const std::vector<NdArray>& teacher_hidden, const HintConfig& cfg) {
  if (student_hidden.empty() || student_hidden.size() != teacher_hidden.size()) {
    throw ContractError("hid loss: traces must cover the same decoder layers");
  }
  const std::size_t layers = student_hidden.size();
  const std::size_t t_len = student_hidden[0].value().shape[0];
  if (t_len < 2) return ad::constant(NdArray::scalar(0.0));  // no pairs

  std::vector<ad::Var> terms;
  for (std::size_t l = 0; l < layers; ++l) {
    if (teacher_hidden[l].shape != student_hidden[l].value().shape) {
      throw DimensionError("hid loss: teacher/student hidden shapes differ");
    }
    ad::Var cs = ad::cosine_matrix(student_hidden[l]);
    const NdArray tr = cosine_matrix_value(teacher_hidden[l]);
    // Active-region mask, strict upper triangle; membership is decided on
    // current values and detached from the gradient.
    NdArray mask({t_len, t_len});
    bool any = false;
    for (std::size_t s = 0; s < t_len; ++s) {
      for (std::size_t t = s + 1; t < t_len; ++t) {
        const bool active =
            cs.value().at(s, t) >= cfg.gamma_st && tr.at(s, t) <= cfg.gamma_tr;
        mask.at(s, t) = active ? 1.0 : 0.0;
        any = any || active;
      }
    }
    if (!any) continue;
    if (cfg.penalty == HintConfig::Penalty::exp_similarity) {
      terms.push_back(ad::sum_all(ad::mul_const(ad::exp(cs), mask)));
    } else {
      ad::Var clamped = ad::clamp_min(ad::sub_from(1.0, cs), kPhiClamp);
      terms.push_back(ad::scale(ad::sum_all(ad::mul_const(ad::log(clamped), mask)), -1.0));
    }
  }
  if (terms.empty()) return ad::constant(NdArray::scalar(0.0));
  const double norm =
      2.0 / (static_cast<double>(t_len - 1) * static_cast<double>(t_len) *
             static_cast<double>(layers));
  return ad::scale(ad::add_n(terms), norm);
}

ad::Var align_loss_graph(const std::vector<ad::Var>& student_attn,
                         const std::vector<NdArray>& teacher_attn) {
  if (student_attn.empty() || student_attn.size() != teacher_attn.size()) {
    throw ContractError("align loss: traces must cover the same decoder layers");
  }
  const std::size_t layers = student_attn.size();
  const auto& shape = student_attn[0].value().shape;
  if (shape.size() != 3) throw DimensionError("align loss: expected [H, T_y, T_x] attention");
  const std::size_t heads = shape[0], t_len = shape[1];

  double teacher_entropy_part = 0.0;  // sum of p*log(p), the constant KL half
  std::vector<ad::Var> cross_terms;
  for (std::size_t l = 0; l < layers; ++l) {
    const NdArray& p = teacher_attn[l];
    if (p.shape != student_attn[l].value().shape) {
      throw DimensionError("align loss: teacher/student attention shapes differ");
    }
    for (double x : p.data) {
      if (x > 0.0) teacher_entropy_part += x * std::log(x);
    }
    ad::Var lq = ad::log(ad::clamp_min(student_attn[l], kKlFloor));
    cross_terms.push_back(ad::scale(ad::sum_all(ad::mul_const(lq, p)), -1.0));
  }
  const double norm = 1.0 / (static_cast<double>(t_len) * static_cast<double>(layers) *
                             static_cast<double>(heads));
  ad::Var summed = ad::scale(ad::add_n(cross_terms), norm);
  return ad::add_scalar(summed, teacher_entropy_part * norm);
}

ad::Var l2_regression_graph(const std::vector<ad::Var>& student_hidden,
                            const std::vector<NdArray>& teacher_hidden) {
  if (student_hidden.empty() || student_hidden.size() != teacher_hidden.size()) {
    throw ContractError("l2 regression: traces must cover the same decoder layers");
  }
  std::vector<ad::Var> terms;
  std::size_t count = 0;
  for (std::size_t l = 0; l < student_hidden.size(); ++l) {
    ad::Var diff = ad::sub(student_hidden[l], ad::constant(teacher_hidden[l]));
    terms.push_back(ad::sum_all(ad::mul(diff, diff)));
    count += teacher_hidden[l].numel();
  }
  return ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(count));
}

double loss_nll(const NdArray& logits, const std::vector<int>& tgt, double eps_ls,
                const std::vector<bool>* pad) {
  return nll_loss_graph(ad::constant(logits), tgt, eps_ls, pad).value().data[0];
}

double loss_hid(const std::vector<NdArray>& student_hidden,
                const std::vector<NdArray>& teacher_hidden, const HintConfig& cfg) {
  std::vector<ad::Var> st;
  st.reserve(student_hidden.size());
  for (const NdArray& h : student_hidden) st.push_back(ad::constant(h));
  return hid_loss_graph(st, teacher_hidden, cfg).value().data[0];
}

double loss_align(const std::vector<NdArray>& student_attn,
                  const std::vector<NdArray>& teacher_attn) {
  std::vector<ad::Var> st;
  st.reserve(student_attn.size());
  for (const NdArray& a : student_attn) st.push_back(ad::constant(a));
  return align_loss_graph(st, teacher_attn).value().data[0];
}

LossBreakdown loss_total(double nll, double hid, double align, const HintConfig& cfg) {
  LossBreakdown b;
  b.nll = nll;
  b.hid = hid;
  b.align = align;
  b.total = nll + cfg.lambda * hid + cfg.mu * align;
  if (!std::isfinite(b.total)) {
    throw TrainingError("non-finite loss: nll=" + std::to_string(nll) +
                        " hid=" + std::to_string(hid) + " align=" + std::to_string(align) +
                        " lambda=" + std::to_string(cfg.lambda) +
                        " mu=" + std::to_string(cfg.mu));
  }
  return b;
}

}  // namespace hintnart
