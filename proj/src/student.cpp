#include "hintnart/student.hpp"

#include <cmath>

#include "hintnart/errors.hpp"

namespace hintnart {

NdArray soft_copy_weights(std::size_t t_src, std::size_t t_tgt, double tau) {
  if (t_src < 1 || t_tgt < 1) throw ContractError("soft_copy_weights: lengths must be >= 1");
  if (tau <= 0.0) throw ContractError("soft_copy_weights: tau must be positive");
  NdArray w({t_src, t_tgt});
  const double ratio = static_cast<double>(t_tgt) / static_cast<double>(t_src);
  for (std::size_t j = 1; j <= t_tgt; ++j) {
    double col_sum = 0.0;
    for (std::size_t i = 1; i <= t_src; ++i) {
      const double center = ratio * static_cast<double>(i);
      const double diff = static_cast<double>(j) - center;
      // floor keeps distant positions strictly positive where exp underflows
      const double v = std::max(std::exp(-diff * diff / tau), 1e-300);
      w.at(i - 1, j - 1) = v;
      col_sum += v;
    }
    for (std::size_t i = 0; i < t_src; ++i) w.at(i, j - 1) /= col_sum;
  }
  return w;
}

StudentModel::StudentModel(ModelConfig cfg, double tau, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), tau_(tau) {
  cfg_.validate();
  if (tau_ <= 0.0) throw ConfigError("student: tau must be positive");
  Rng rng(init_seed);
  nn::init_embedding(params_, "src_emb", cfg_.vocab_src, cfg_.d_model, rng);
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    nn::init_attention(params_, p + ".self", cfg_, rng);
    nn::init_linear(params_, p + ".ffn.fc1", cfg_.d_model, cfg_.d_ff, rng);
    nn::init_linear(params_, p + ".ffn.fc2", cfg_.d_ff, cfg_.d_model, rng);
    nn::init_layer_norm(params_, p + ".ffn", cfg_.d_model);
  }
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    nn::init_attention(params_, p + ".self", cfg_, rng);
    nn::init_attention(params_, p + ".pos", cfg_, rng);
    nn::init_attention(params_, p + ".ctx", cfg_, rng);
    nn::init_linear(params_, p + ".ffn.fc1", cfg_.d_model, cfg_.d_ff, rng);
    nn::init_linear(params_, p + ".ffn.fc2", cfg_.d_ff, cfg_.d_model, rng);
    nn::init_layer_norm(params_, p + ".ffn", cfg_.d_model);
  }
  nn::init_linear(params_, "out", cfg_.d_model, cfg_.vocab_tgt, rng);
}

void StudentModel::set_tau(double tau) {
  if (tau <= 0.0) throw ConfigError("student: tau must be positive");
  tau_ = tau;
}

void StudentModel::check_src(const std::vector<int>& src) const {
  if (src.empty()) throw InputError("student: empty source");
  if (src.size() > cfg_.max_len) throw InputError("student: source longer than max_len");
  for (int id : src) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_src) {
      throw InputError("student: source id " + std::to_string(id) + " out of vocabulary");
    }
  }
}

ad::Var StudentModel::decoder_input_graph(GraphCtx& ctx, const std::vector<int>& src,
                                          std::size_t t_tgt) const {
  check_src(src);
  if (t_tgt < 1) throw ContractError("student: target length must be >= 1");
  ad::Var emb = ad::gather_rows(ctx.param("src_emb"), src);  // [T_x, d]
  NdArray w = soft_copy_weights(src.size(), t_tgt, tau_);    // [T_x, T_y]
  // z = w^T · e, each row a convex combination of source embeddings
  NdArray wt({t_tgt, src.size()});
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t j = 0; j < t_tgt; ++j) wt.at(j, i) = w.at(i, j);
  }
  return ad::matmul(ad::constant(std::move(wt)), emb);
}

StudentModel::Forward StudentModel::parallel_forward(GraphCtx& ctx,
                                                     const std::vector<int>& src,
                                                     std::size_t t_tgt) const {
  check_src(src);
  if (t_tgt < 1) throw ContractError("student: target length must be >= 1");
  if (t_tgt > cfg_.max_len) throw InputError("student: target length exceeds max_len");
  Forward fwd;

  const std::vector<bool> src_pad = nn::pad_mask(src);
  {
    ad::Var h = nn::embed(ctx, "src_emb", src, cfg_);
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "enc.l" + std::to_string(l);
      auto attn = nn::multi_head_attention(ctx, p + ".self", h, h, h, cfg_,
                                           /*causal=*/false, &src_pad);
      h = nn::sublayer(ctx, p + ".self", h, attn.values);
      h = nn::sublayer(ctx, p + ".ffn", h, nn::ffn(ctx, p + ".ffn", h, cfg_));
    }
    fwd.encoder_out = h;
  }

  ad::Var z = decoder_input_graph(ctx, src, t_tgt);
  ad::Var h = ad::scale(z, std::sqrt(static_cast<double>(cfg_.d_model)));
  h = ad::add_const(h, nn::positional_encoding(t_tgt, cfg_.d_model));

  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    auto self = nn::multi_head_attention(ctx, p + ".self", h, h, h, cfg_,
                                         /*causal=*/false, nullptr);
    fwd.dec_self_attn.push_back(self.weights);
    h = nn::sublayer(ctx, p + ".self", h, self.values);

    auto pos = nn::positional_attention(ctx, p + ".pos", h, cfg_);
    fwd.pos_attn.push_back(pos.weights);
    h = nn::sublayer(ctx, p + ".pos", h, pos.values);

    auto cross = nn::multi_head_attention(ctx, p + ".ctx", h, fwd.encoder_out,
                                          fwd.encoder_out, cfg_, /*causal=*/false, &src_pad);
    fwd.enc_dec_attn.push_back(cross.weights);
    h = nn::sublayer(ctx, p + ".ctx", h, cross.values);

    h = nn::sublayer(ctx, p + ".ffn", h, nn::ffn(ctx, p + ".ffn", h, cfg_));
    fwd.decoder_hidden.push_back(h);
  }
  fwd.logits = nn::linear(ctx, "out", h);
  return fwd;
}

StudentTrace StudentModel::parallel_decode(const std::vector<int>& src,
                                           std::size_t t_tgt) const {
  GraphCtx ctx{&params_};
  Forward fwd = parallel_forward(ctx, src, t_tgt);
  StudentTrace trace;
  for (const auto& h : fwd.decoder_hidden) trace.hidden.push_back(h.value());
  for (const auto& a : fwd.enc_dec_attn) trace.attn.push_back(a.value());
  trace.logits = fwd.logits.value();
  ++sequential_steps_;
  return trace;
}

std::vector<int> StudentModel::predict_tokens(const NdArray& logits) {
  if (logits.rank() != 2) throw ContractError("predict_tokens: logits must be rank 2");
  const std::size_t t = logits.shape[0], v = logits.shape[1];
  std::vector<int> out(t);
  for (std::size_t i = 0; i < t; ++i) {
    out[i] = static_cast<int>(argmax_row(logits.data.data() + i * v, v));
  }
  return out;
}

}  // namespace hintnart
