#pragma once

#include <cstdint>
#include <vector>

#include "hintnart/nn.hpp"
#include "hintnart/teacher.hpp"

namespace hintnart {

// Gaussian position kernel, 1-based indices so i = T_x maps onto j' = T_y:
//   w_ij ∝ exp(-(j - (T_y/T_x)·i)^2 / tau), normalized over i per column j.
// Each decoder input z_j is then a convex combination of source embeddings.
NdArray soft_copy_weights(std::size_t t_src, std::size_t t_tgt, double tau);

using StudentTrace = DecoderTrace;

// Non-autoregressive student: same encoder skeleton as the teacher, decoder
// fed with soft-copied source embeddings, unmasked self-attention plus a
// positional attention sublayer, all positions emitted in one pass. There is
// no target-token input anywhere in this class.
class StudentModel {
 public:
  StudentModel(ModelConfig cfg, double tau, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  double tau() const { return tau_; }
  void set_tau(double tau);
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Forward {
    ad::Var encoder_out;                  // [T_x, d_model]
    ad::Var logits;                       // [T_y, V_tgt]
    std::vector<ad::Var> decoder_hidden;  // per layer [T_y, d_model]
    std::vector<ad::Var> enc_dec_attn;    // per layer [H, T_y, T_x]
    std::vector<ad::Var> dec_self_attn;   // per layer [H, T_y, T_y]
    std::vector<ad::Var> pos_attn;        // per layer [H, T_y, T_y]
  };

  // z_j = sum_i w_ij e(x_i), raw source embeddings (no position term yet).
  ad::Var decoder_input_graph(GraphCtx& ctx, const std::vector<int>& src,
                              std::size_t t_tgt) const;
  Forward parallel_forward(GraphCtx& ctx, const std::vector<int>& src,
                           std::size_t t_tgt) const;

  // One decoder pass per call: the sequential step counter increments by
  // exactly 1 regardless of t_tgt.
  StudentTrace parallel_decode(const std::vector<int>& src, std::size_t t_tgt) const;

  static std::vector<int> predict_tokens(const NdArray& logits);

  std::uint64_t sequential_steps() const { return sequential_steps_; }
  void reset_sequential_steps() const { sequential_steps_ = 0; }

 private:
  void check_src(const std::vector<int>& src) const;

  ModelConfig cfg_;
  double tau_;
  ParamStore params_;
  mutable std::uint64_t sequential_steps_ = 0;
};

}  // namespace hintnart
