#pragma once

#include <cstdint>
#include <vector>

#include "hintnart/nn.hpp"

namespace hintnart {

// Per-layer decoder capture from a forced decode. hidden[l] is the full layer
// output (after the FFN sublayer's residual + norm); attn[l] holds the
// encoder-decoder attention rows of every head.
struct DecoderTrace {
  std::vector<NdArray> hidden;  // N x [T_y, d_model]
  std::vector<NdArray> attn;    // N x [H, T_y, T_x]
  NdArray logits;               // [T_y, V_tgt]
};

// Autoregressive transformer: M-layer encoder, N-layer decoder with causal
// self-attention. Frozen instances may score candidates concurrently; the
// sequential step counter is bookkeeping, not synchronization.
class TeacherModel {
 public:
  TeacherModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Forward {
    ad::Var encoder_out;                  // [T_x, d_model]
    ad::Var logits;                       // [T_y, V_tgt]
    std::vector<ad::Var> decoder_hidden;  // per layer [T_y, d_model]
    std::vector<ad::Var> enc_dec_attn;    // per layer [H, T_y, T_x]
    std::vector<ad::Var> dec_self_attn;   // per layer [H, T_y, T_y]
    std::vector<ad::Var> enc_self_attn;   // per layer [H, T_x, T_x]
  };

  ad::Var encode_graph(GraphCtx& ctx, const std::vector<int>& src) const;
  // Decoder input is tgt shifted right behind a begin-of-sequence token;
  // logits[t] therefore conditions only on src and tgt[<t].
  Forward forced_forward(GraphCtx& ctx, const std::vector<int>& src,
                         const std::vector<int>& tgt) const;

  // Inference-mode entry points (no gradients, no dropout).
  NdArray encode(const std::vector<int>& src) const;
  DecoderTrace forced_decode(const std::vector<int>& src, const std::vector<int>& tgt) const;
  std::vector<int> greedy_decode(const std::vector<int>& src, std::size_t max_len) const;
  double score_sequence(const std::vector<int>& src, const std::vector<int>& tgt) const;

  std::uint64_t sequential_steps() const { return sequential_steps_; }
  void reset_sequential_steps() const { sequential_steps_ = 0; }

 private:
  void check_src(const std::vector<int>& src) const;
  void check_tgt(const std::vector<int>& tgt) const;

  ModelConfig cfg_;
  ParamStore params_;
  mutable std::uint64_t sequential_steps_ = 0;
};

// Smallest id wins ties, so decoding is deterministic.
std::size_t argmax_row(const double* row, std::size_t n);

}  // namespace hintnart
