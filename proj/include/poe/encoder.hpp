#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "poe/common.hpp"
#include "poe/text.hpp"

namespace poe {

struct EncoderConfig {
  int vocab_size = 0;
  int num_layers = 2;
  int num_heads = 4;
  int model_dim = 64;
  int ffn_dim = 128;
  int max_seq_len = 24;
  int num_classes = 2;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  int head_dim() const { return model_dim / num_heads; }

  void validate() const {
    require(vocab_size > Vocabulary::kNumSpecials, "encoder: vocab_size too small");
    require(num_layers >= 1 && num_heads >= 1 && model_dim >= 1 && ffn_dim >= 1,
            "encoder: dimensions must be positive");
    require(model_dim % num_heads == 0, "encoder: model_dim must be divisible by num_heads");
    require(max_seq_len >= 1, "encoder: max_seq_len must be >= 1");
    require(num_classes >= 2, "encoder: needs K >= 2 classes");
    require(dropout >= 0.0 && dropout < 1.0, "encoder: dropout must be in [0, 1)");
  }

  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  Matrix wq, wk, wv, wo;  // d x d
  Vector bq, bk, bv, bo;  // d
  Vector ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix w1;  // d x m
  Vector b1;  // m
  Matrix w2;  // m x d
  Vector b2;  // d
};

struct EncoderParams {
  EncoderConfig config;
  Matrix tok_emb;  // V x d
  Matrix pos_emb;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Vector lnf_g, lnf_b;
  Matrix w_head;  // d x K
  Vector b_head;  // K
};

// Flat view over every parameter tensor, in a fixed order. Drives the
// optimizer, serialization, checksums and the finite-difference tests.
struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index size;
  bool decay;  // participates in weight decay
};

inline std::vector<TensorRef> param_refs(EncoderParams& p) {
  std::vector<TensorRef> refs;
  auto add = [&](const std::string& name, auto& tensor, bool decay) {
    refs.push_back({name, tensor.data(), tensor.size(), decay});
  };
  add("tok_emb", p.tok_emb, true);
  add("pos_emb", p.pos_emb, true);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lay = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "wq", lay.wq, true);
    add(pre + "bq", lay.bq, false);
    add(pre + "wk", lay.wk, true);
    add(pre + "bk", lay.bk, false);
    add(pre + "wv", lay.wv, true);
    add(pre + "bv", lay.bv, false);
    add(pre + "wo", lay.wo, true);
    add(pre + "bo", lay.bo, false);
    add(pre + "ln1_g", lay.ln1_g, false);
    add(pre + "ln1_b", lay.ln1_b, false);
    add(pre + "ln2_g", lay.ln2_g, false);
    add(pre + "ln2_b", lay.ln2_b, false);
    add(pre + "w1", lay.w1, true);
    add(pre + "b1", lay.b1, false);
    add(pre + "w2", lay.w2, true);
    add(pre + "b2", lay.b2, false);
  }
  add("lnf_g", p.lnf_g, false);
  add("lnf_b", p.lnf_b, false);
  add("w_head", p.w_head, true);
  add("b_head", p.b_head, false);
  return refs;
}

inline std::uint64_t params_checksum(const EncoderParams& p) {
  auto refs = param_refs(const_cast<EncoderParams&>(p));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : refs)
    h = fnv1a64(r.data, static_cast<std::size_t>(r.size) * sizeof(double), h);
  return h;
}

inline EncoderParams make_zero_params(const EncoderConfig& cfg) {
  EncoderParams p;
  p.config = cfg;
  const int d = cfg.model_dim, m = cfg.ffn_dim;
  p.tok_emb = Matrix::Zero(cfg.vocab_size, d);
  p.pos_emb = Matrix::Zero(cfg.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  for (auto& lay : p.layers) {
    lay.wq = lay.wk = lay.wv = lay.wo = Matrix::Zero(d, d);
    lay.bq = lay.bk = lay.bv = lay.bo = Vector::Zero(d);
    lay.ln1_g = lay.ln2_g = Vector::Zero(d);
    lay.ln1_b = lay.ln2_b = Vector::Zero(d);
    lay.w1 = Matrix::Zero(d, m);
    lay.b1 = Vector::Zero(m);
    lay.w2 = Matrix::Zero(m, d);
    lay.b2 = Vector::Zero(d);
  }
  p.lnf_g = Vector::Zero(d);
  p.lnf_b = Vector::Zero(d);
  p.w_head = Matrix::Zero(d, cfg.num_classes);
  p.b_head = Vector::Zero(cfg.num_classes);
  return p;
}

inline EncoderParams init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p = make_zero_params(cfg);
  Rng rng(cfg.seed ^ 0x5eed5eed5eedULL);
  auto fill_normal = [&](Matrix& mat, double std) {
    for (Eigen::Index i = 0; i < mat.size(); ++i) mat.data()[i] = rng.normal(0.0, std);
  };
  fill_normal(p.tok_emb, 0.02);
  fill_normal(p.pos_emb, 0.02);
  for (auto& lay : p.layers) {
    const double proj_std = std::sqrt(2.0 / (cfg.model_dim + cfg.model_dim));
    fill_normal(lay.wq, proj_std);
    fill_normal(lay.wk, proj_std);
    fill_normal(lay.wv, proj_std);
    fill_normal(lay.wo, proj_std);
    fill_normal(lay.w1, std::sqrt(2.0 / (cfg.model_dim + cfg.ffn_dim)));
    fill_normal(lay.w2, std::sqrt(2.0 / (cfg.model_dim + cfg.ffn_dim)));
    lay.ln1_g.setOnes();
    lay.ln2_g.setOnes();
  }
  p.lnf_g.setOnes();
  fill_normal(p.w_head, std::sqrt(2.0 / (cfg.model_dim + cfg.num_classes)));
  return p;
}

struct EncoderOutput {
  Vector cls_feature;   // f_att(x), dim d
  Vector logits;        // dim K
  Vector cls_attention; // length S, last layer, CLS row, head-averaged,
                        // renormalized over the maskable positions
};

namespace detail {

constexpr double kLnEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Row-wise layer norm; keeps normalized rows and inverse std for backward.
struct LnCache {
  Matrix xhat;
  Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Vector& gamma, const Vector& beta, LnCache& cache) {
  const auto t = x.rows();
  const auto d = x.cols();
  cache.xhat.resize(t, d);
  cache.inv_std.resize(t);
  Matrix out(t, d);
  for (Eigen::Index r = 0; r < t; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std[r] = inv_std;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv_std;
    out.row(r) = cache.xhat.row(r).cwiseProduct(gamma.transpose()) + beta.transpose();
  }
  return out;
}

inline Matrix layer_norm_backward(const Matrix& dout, const LnCache& cache, const Vector& gamma,
                                  Vector& dgamma, Vector& dbeta) {
  const auto t = dout.rows();
  const auto d = dout.cols();
  Matrix dx(t, d);
  for (Eigen::Index r = 0; r < t; ++r) {
    dgamma += dout.row(r).cwiseProduct(cache.xhat.row(r)).transpose();
    dbeta += dout.row(r).transpose();
    const Eigen::RowVectorXd g = dout.row(r).cwiseProduct(gamma.transpose());
    const double mean_g = g.mean();
    const double mean_gx = g.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = (g.array() - mean_g - cache.xhat.row(r).array() * mean_gx) * cache.inv_std[r];
  }
  return dx;
}

inline void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

struct LayerCache {
  Matrix x_in;
  LnCache ln1;
  Matrix a1;                  // LN1 output
  Matrix q, k, v;             // T x d
  std::vector<Matrix> probs;  // per head, T x T
  Matrix attn_concat;         // heads concatenated, before Wo
  Matrix drop_attn;           // dropout scale factors (empty at inference)
  Matrix r1;
  LnCache ln2;
  Matrix a2;  // LN2 output
  Matrix u;   // pre-activation, T x m
  Matrix g;   // gelu(u)
  Matrix drop_ffn;
};

}  // namespace detail

struct ForwardCache {
  std::vector<int> ids;  // effective window, CLS plus real tokens
  int seq_len = 0;       // S
  Matrix x0;
  std::vector<detail::LayerCache> layers;
  detail::LnCache lnf;
  Matrix y;  // final LN output
  Vector feature;
  Vector logits;
};

inline Matrix embed_input(const EncoderParams& p, const TokenizedExample& ex) {
  const int t_eff = ex.length + 1;
  require(t_eff <= p.config.max_seq_len, "encoder: example longer than configured max_seq_len");
  Matrix x0(t_eff, p.config.model_dim);
  for (int t = 0; t < t_eff; ++t) {
    const int id = ex.ids[static_cast<std::size_t>(t)];
    require(id >= 0 && id < p.config.vocab_size, "encoder: token id out of range");
    x0.row(t) = p.tok_emb.row(id) + p.pos_emb.row(t);
  }
  return x0;
}

// Forward over the CLS+real-token window. PAD positions are never computed,
// which is equivalent to masking them out of every attention softmax.
// `dropout_rng` enables dropout (training mode); cache may be null when no
// backward pass follows.
inline EncoderOutput forward_embedded(const EncoderParams& p, const Matrix& x0, int seq_len,
                                      ForwardCache* cache, Rng* dropout_rng) {
  const auto& cfg = p.config;
  const int t_eff = static_cast<int>(x0.rows());
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double keep = 1.0 - cfg.dropout;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.seq_len = seq_len;
  c.x0 = x0;
  c.layers.assign(static_cast<std::size_t>(cfg.num_layers), {});

  auto dropout_mask = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    return m;
  };

  Matrix x = x0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& lc = c.layers[static_cast<std::size_t>(l)];
    const auto& lay = p.layers[static_cast<std::size_t>(l)];
    lc.x_in = x;
    lc.a1 = detail::layer_norm(x, lay.ln1_g, lay.ln1_b, lc.ln1);
    lc.q = (lc.a1 * lay.wq).rowwise() + lay.bq.transpose();
    lc.k = (lc.a1 * lay.wk).rowwise() + lay.bk.transpose();
    lc.v = (lc.a1 * lay.wv).rowwise() + lay.bv.transpose();
    lc.probs.resize(static_cast<std::size_t>(cfg.num_heads));
    lc.attn_concat.resize(t_eff, cfg.model_dim);
    for (int h = 0; h < cfg.num_heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      Matrix scores = qh * kh.transpose() * scale;
      detail::softmax_rows_inplace(scores);
      lc.probs[static_cast<std::size_t>(h)] = scores;
      lc.attn_concat.middleCols(h * dh, dh) = scores * vh;
    }
    Matrix attn_out = (lc.attn_concat * lay.wo).rowwise() + lay.bo.transpose();
    if (dropout_rng && cfg.dropout > 0.0) {
      lc.drop_attn = dropout_mask(t_eff, cfg.model_dim);
      attn_out = attn_out.cwiseProduct(lc.drop_attn);
    }
    lc.r1 = x + attn_out;

    lc.a2 = detail::layer_norm(lc.r1, lay.ln2_g, lay.ln2_b, lc.ln2);
    lc.u = (lc.a2 * lay.w1).rowwise() + lay.b1.transpose();
    lc.g = lc.u.unaryExpr([](double v) { return detail::gelu(v); });
    Matrix ffn_out = (lc.g * lay.w2).rowwise() + lay.b2.transpose();
    if (dropout_rng && cfg.dropout > 0.0) {
      lc.drop_ffn = dropout_mask(t_eff, cfg.model_dim);
      ffn_out = ffn_out.cwiseProduct(lc.drop_ffn);
    }
    x = lc.r1 + ffn_out;
  }

  c.y = detail::layer_norm(x, p.lnf_g, p.lnf_b, c.lnf);
  c.feature = c.y.row(0).transpose();
  c.logits = p.w_head.transpose() * c.feature + p.b_head;

  EncoderOutput out;
  out.cls_feature = c.feature;
  out.logits = c.logits;
  out.cls_attention = Vector::Zero(seq_len);
  if (seq_len > 0) {
    const auto& last = c.layers.back();
    Eigen::RowVectorXd cls_row = Eigen::RowVectorXd::Zero(t_eff);
    for (const auto& ph : last.probs) cls_row += ph.row(0);
    cls_row /= static_cast<double>(cfg.num_heads);
    out.cls_attention = cls_row.segment(1, seq_len).transpose();
    out.cls_attention /= out.cls_attention.sum();
  }
  return out;
}

inline EncoderOutput forward(const EncoderParams& p, const TokenizedExample& ex,
                             ForwardCache* cache = nullptr, Rng* dropout_rng = nullptr) {
  Matrix x0 = embed_input(p, ex);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.ids.assign(ex.ids.begin(), ex.ids.begin() + ex.length + 1);
  return forward_embedded(p, x0, ex.length, &c, dropout_rng);
}

inline std::vector<EncoderOutput> forward_batch(const EncoderParams& p,
                                                const std::vector<TokenizedExample>& batch) {
  std::vector<EncoderOutput> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(forward(p, ex));
  return out;
}

// Backpropagates dlogits (and an optional extra gradient on the CLS feature)
// through the cached forward pass. Accumulates into `grads` (same shapes as
// the parameters) and returns the gradient w.r.t. the input embedding rows.
inline Matrix backward(const EncoderParams& p, const ForwardCache& c, const Vector& dlogits,
                       const Vector& dfeature_extra, EncoderParams& grads) {
  const auto& cfg = p.config;
  const int t_eff = static_cast<int>(c.x0.rows());
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Vector dfeat = p.w_head * dlogits;
  if (dfeature_extra.size() > 0) dfeat += dfeature_extra;
  grads.w_head.noalias() += c.feature * dlogits.transpose();
  grads.b_head += dlogits;

  Matrix dy = Matrix::Zero(t_eff, cfg.model_dim);
  dy.row(0) = dfeat.transpose();
  Matrix dx = detail::layer_norm_backward(dy, c.lnf, p.lnf_g, grads.lnf_g, grads.lnf_b);

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& lc = c.layers[static_cast<std::size_t>(l)];
    const auto& lay = p.layers[static_cast<std::size_t>(l)];
    auto& glay = grads.layers[static_cast<std::size_t>(l)];

    // x_out = r1 + drop(ffn(a2)), a2 = LN2(r1)
    Matrix dffn_out = lc.drop_ffn.size() ? dx.cwiseProduct(lc.drop_ffn) : dx;
    Matrix dr1 = dx;

    Matrix dg = dffn_out * lay.w2.transpose();
    glay.w2.noalias() += lc.g.transpose() * dffn_out;
    glay.b2 += dffn_out.colwise().sum().transpose();
    Matrix du = dg.cwiseProduct(lc.u.unaryExpr([](double v) { return detail::gelu_grad(v); }));
    glay.w1.noalias() += lc.a2.transpose() * du;
    glay.b1 += du.colwise().sum().transpose();
    Matrix da2 = du * lay.w1.transpose();
    dr1 += detail::layer_norm_backward(da2, lc.ln2, lay.ln2_g, glay.ln2_g, glay.ln2_b);

    // r1 = x_in + drop(attn(a1)), a1 = LN1(x_in)
    Matrix dattn_out = lc.drop_attn.size() ? dr1.cwiseProduct(lc.drop_attn) : dr1;
    Matrix dx_in = dr1;

    Matrix dconcat = dattn_out * lay.wo.transpose();
    glay.wo.noalias() += lc.attn_concat.transpose() * dattn_out;
    glay.bo += dattn_out.colwise().sum().transpose();

    Matrix dq = Matrix::Zero(t_eff, cfg.model_dim);
    Matrix dk = Matrix::Zero(t_eff, cfg.model_dim);
    Matrix dv = Matrix::Zero(t_eff, cfg.model_dim);
    for (int h = 0; h < cfg.num_heads; ++h) {
      const auto& probs = lc.probs[static_cast<std::size_t>(h)];
      const auto doh = dconcat.middleCols(h * dh, dh);
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);

      Matrix dprobs = doh * vh.transpose();
      dv.middleCols(h * dh, dh) = probs.transpose() * doh;
      Matrix dscores(t_eff, t_eff);
      for (Eigen::Index r = 0; r < t_eff; ++r) {
        const double dot = dprobs.row(r).dot(probs.row(r));
        dscores.row(r) = probs.row(r).cwiseProduct(dprobs.row(r).array().operator-(dot).matrix());
      }
      dq.middleCols(h * dh, dh) = dscores * kh * scale;
      dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
    }

    Matrix da1 = dq * lay.wq.transpose() + dk * lay.wk.transpose() + dv * lay.wv.transpose();
    glay.wq.noalias() += lc.a1.transpose() * dq;
    glay.bq += dq.colwise().sum().transpose();
    glay.wk.noalias() += lc.a1.transpose() * dk;
    glay.bk += dk.colwise().sum().transpose();
    glay.wv.noalias() += lc.a1.transpose() * dv;
    glay.bv += dv.colwise().sum().transpose();
    dx_in += detail::layer_norm_backward(da1, lc.ln1, lay.ln1_g, glay.ln1_g, glay.ln1_b);

    dx = dx_in;
  }
  return dx;
}

// Scatter the embedding-input gradient into token/position embedding rows.
inline void accumulate_embedding_grads(const ForwardCache& c, const Matrix& dx0,
                                       EncoderParams& grads) {
  for (Eigen::Index t = 0; t < dx0.rows(); ++t) {
    grads.tok_emb.row(c.ids[static_cast<std::size_t>(t)]) += dx0.row(t);
    grads.pos_emb.row(t) += dx0.row(t);
  }
}

// ---- checkpoint serialization ----------------------------------------------

inline Json to_json(const EncoderConfig& cfg) {
  return Json{{"vocab_size", cfg.vocab_size}, {"num_layers", cfg.num_layers},
              {"num_heads", cfg.num_heads},   {"model_dim", cfg.model_dim},
              {"ffn_dim", cfg.ffn_dim},       {"max_seq_len", cfg.max_seq_len},
              {"num_classes", cfg.num_classes}, {"dropout", cfg.dropout},
              {"seed", cfg.seed}};
}

inline EncoderConfig encoder_config_from_json(const Json& j) {
  EncoderConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.model_dim = j.at("model_dim").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

inline Json params_to_json(const EncoderParams& p) {
  Json tensors = Json::object();
  for (const auto& r : param_refs(const_cast<EncoderParams&>(p)))
    tensors[r.name] = std::vector<double>(r.data, r.data + r.size);
  return Json{{"config", to_json(p.config)}, {"tensors", tensors}};
}

inline EncoderParams params_from_json(const Json& j) {
  EncoderParams p = make_zero_params(encoder_config_from_json(j.at("config")));
  const auto& tensors = j.at("tensors");
  for (auto& r : param_refs(p)) {
    const auto vals = tensors.at(r.name).get<std::vector<double>>();
    require(static_cast<Eigen::Index>(vals.size()) == r.size,
            "checkpoint tensor size mismatch for " + r.name);
    std::copy(vals.begin(), vals.end(), r.data);
  }
  return p;
}

}  // namespace poe
