#include "c2af/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace c2af {

namespace {

Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

void require_input(const Tensor& x, const LstmParams& p) {
  if (x.rank() != 2 || x.extent(1) != p.input_dim) {
    throw std::invalid_argument("lstm: input shape " + shape_str(x.shape()) +
                                " does not match input_dim " +
                                std::to_string(p.input_dim));
  }
}

// d = W x (W: h x d_in), accumulated into out.
void matvec_acc(const Tensor& w, const double* x, double* out) {
  const std::size_t rows = w.extent(0), cols = w.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wrow = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wrow[c] * x[c];
    out[r] += acc;
  }
}

// out += W^T d (W: rows x cols, d: rows, out: cols)
void matvec_t_acc(const Tensor& w, const double* d, double* out) {
  const std::size_t rows = w.extent(0), cols = w.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double dv = d[r];
    const double* wrow = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += dv * wrow[c];
  }
}

// grad += d (rows) outer x (cols)
void outer_acc(Tensor& grad, const double* d, const double* x) {
  const std::size_t rows = grad.extent(0), cols = grad.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* grow = grad.data() + r * cols;
    const double dv = d[r];
    for (std::size_t c = 0; c < cols; ++c) grow[c] += dv * x[c];
  }
}

struct LstmCache {
  // T x hidden each; gate activations and cell states for BPTT.
  Tensor f, i, o, g, c, tanh_c, h;
};

Tensor lstm_forward_cached(const Tensor& x, const LstmParams& p, LstmCache* cache) {
  require_input(x, p);
  const std::size_t T = x.extent(0), d = p.hidden_dim;
  Tensor h_seq({T, d});
  LstmCache local;
  LstmCache& cc = cache ? *cache : local;
  cc.f = Tensor({T, d});
  cc.i = Tensor({T, d});
  cc.o = Tensor({T, d});
  cc.g = Tensor({T, d});
  cc.c = Tensor({T, d});
  cc.tanh_c = Tensor({T, d});

  std::vector<double> h_prev(d, 0.0), c_prev(d, 0.0);
  std::vector<double> pre_f(d), pre_i(d), pre_o(d), pre_g(d);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xt = x.data() + t * p.input_dim;
    for (std::size_t j = 0; j < d; ++j) {
      pre_f[j] = p.b_f.value[j];
      pre_i[j] = p.b_i.value[j];
      pre_o[j] = p.b_o.value[j];
      pre_g[j] = p.b_c.value[j];
    }
    matvec_acc(p.w_f.value, xt, pre_f.data());
    matvec_acc(p.w_i.value, xt, pre_i.data());
    matvec_acc(p.w_o.value, xt, pre_o.data());
    matvec_acc(p.w_c.value, xt, pre_g.data());
    matvec_acc(p.u_f.value, h_prev.data(), pre_f.data());
    matvec_acc(p.u_i.value, h_prev.data(), pre_i.data());
    matvec_acc(p.u_o.value, h_prev.data(), pre_o.data());
    matvec_acc(p.u_c.value, h_prev.data(), pre_g.data());
    for (std::size_t j = 0; j < d; ++j) {
      const double f = sigmoid_scalar(pre_f[j]);
      const double i = sigmoid_scalar(pre_i[j]);
      const double o = sigmoid_scalar(pre_o[j]);
      const double g = std::tanh(pre_g[j]);
      const double c = f * c_prev[j] + i * g;
      const double tc = std::tanh(c);
      const double h = o * tc;
      cc.f(t, j) = f;
      cc.i(t, j) = i;
      cc.o(t, j) = o;
      cc.g(t, j) = g;
      cc.c(t, j) = c;
      cc.tanh_c(t, j) = tc;
      h_seq(t, j) = h;
      c_prev[j] = c;
      h_prev[j] = h;
    }
  }
  if (cache) cache->h = h_seq;
  return h_seq;
}

// BPTT. dh_seq holds dL/dh_t for every step; grads accumulate into p.
void lstm_backward(const Tensor& x, const LstmParams& p, const LstmCache& cc,
                   const Tensor& dh_seq, LstmParams& grads_into) {
  const std::size_t T = x.extent(0), d = p.hidden_dim;
  std::vector<double> dh_next(d, 0.0), dc_next(d, 0.0);
  std::vector<double> daf(d), dai(d), dao(d), dag(d);
  for (std::size_t t = T; t-- > 0;) {
    const double* xt = x.data() + t * p.input_dim;
    const double* h_prev = t == 0 ? nullptr : cc.h.data() + (t - 1) * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double dh = dh_seq(t, j) + dh_next[j];
      const double o = cc.o(t, j);
      const double tc = cc.tanh_c(t, j);
      const double dodt = dh * tc;
      double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
      const double f = cc.f(t, j);
      const double i = cc.i(t, j);
      const double g = cc.g(t, j);
      const double c_prev = t == 0 ? 0.0 : cc.c(t - 1, j);
      const double df = dc * c_prev;
      const double di = dc * g;
      const double dg = dc * i;
      dc_next[j] = dc * f;
      daf[j] = df * f * (1.0 - f);
      dai[j] = di * i * (1.0 - i);
      dao[j] = dodt * o * (1.0 - o);
      dag[j] = dg * (1.0 - g * g);
    }
    outer_acc(grads_into.w_f.grad, daf.data(), xt);
    outer_acc(grads_into.w_i.grad, dai.data(), xt);
    outer_acc(grads_into.w_o.grad, dao.data(), xt);
    outer_acc(grads_into.w_c.grad, dag.data(), xt);
    if (h_prev) {
      outer_acc(grads_into.u_f.grad, daf.data(), h_prev);
      outer_acc(grads_into.u_i.grad, dai.data(), h_prev);
      outer_acc(grads_into.u_o.grad, dao.data(), h_prev);
      outer_acc(grads_into.u_c.grad, dag.data(), h_prev);
    }
    for (std::size_t j = 0; j < d; ++j) {
      grads_into.b_f.grad[j] += daf[j];
      grads_into.b_i.grad[j] += dai[j];
      grads_into.b_o.grad[j] += dao[j];
      grads_into.b_c.grad[j] += dag[j];
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    matvec_t_acc(p.u_f.value, daf.data(), dh_next.data());
    matvec_t_acc(p.u_i.value, dai.data(), dh_next.data());
    matvec_t_acc(p.u_o.value, dao.data(), dh_next.data());
    matvec_t_acc(p.u_c.value, dag.data(), dh_next.data());
  }
}

struct ConvLayerCache {
  std::vector<Tensor> pre;    // per-sample pre-relu conv output
  std::vector<Tensor> post;   // per-sample relu output (the normalized set's input)
  std::vector<Tensor> xhat;   // per-sample normalized values (train mode)
  std::vector<Tensor> out;    // per-sample post-BN output
  std::vector<double> mean, inv_std;  // per channel (train-mode batch stats)
};

// One conv->relu->bn layer over a batch. In train mode the normalization
// statistics are computed per channel over (batch x time).
void conv_block_forward_batch(const std::vector<const Tensor*>& inputs,
                              TcnLayerParams& layer, Mode mode,
                              bool update_running_stats, ConvLayerCache& cache) {
  const std::size_t batch = inputs.size();
  cache.pre.resize(batch);
  cache.post.resize(batch);
  cache.out.resize(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    cache.pre[s] = conv1d(*inputs[s], layer.w.value, layer.b.value);
    cache.post[s] = relu(cache.pre[s]);
  }
  const std::size_t t_out = cache.pre[0].extent(0);
  const std::size_t ch = layer.out_channels;

  if (mode == Mode::kInfer) {
    for (std::size_t s = 0; s < batch; ++s) {
      Tensor out(cache.post[s].shape());
      for (std::size_t c = 0; c < ch; ++c) {
        const double inv = 1.0 / std::sqrt(layer.running_var[c] + kBnEps);
        const double mu = layer.running_mean[c];
        const double gamma = layer.gamma.value[c];
        const double beta = layer.beta.value[c];
        for (std::size_t t = 0; t < t_out; ++t) {
          out(t, c) = gamma * (cache.post[s](t, c) - mu) * inv + beta;
        }
      }
      cache.out[s] = std::move(out);
    }
    return;
  }

  const double n = static_cast<double>(batch * t_out);
  cache.mean.assign(ch, 0.0);
  cache.inv_std.assign(ch, 0.0);
  std::vector<double> var(ch, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t t = 0; t < t_out; ++t) sum += cache.post[s](t, c);
    }
    const double mu = sum / n;
    double sq = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t t = 0; t < t_out; ++t) {
        const double d = cache.post[s](t, c) - mu;
        sq += d * d;
      }
    }
    cache.mean[c] = mu;
    var[c] = sq / n;
    cache.inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEps);
  }
  if (update_running_stats) {
    for (std::size_t c = 0; c < ch; ++c) {
      layer.running_mean[c] =
          kBnMomentum * layer.running_mean[c] + (1.0 - kBnMomentum) * cache.mean[c];
      layer.running_var[c] =
          kBnMomentum * layer.running_var[c] + (1.0 - kBnMomentum) * var[c];
    }
  }
  cache.xhat.resize(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    Tensor xhat(cache.post[s].shape());
    Tensor out(cache.post[s].shape());
    for (std::size_t c = 0; c < ch; ++c) {
      const double mu = cache.mean[c];
      const double inv = cache.inv_std[c];
      const double gamma = layer.gamma.value[c];
      const double beta = layer.beta.value[c];
      for (std::size_t t = 0; t < t_out; ++t) {
        const double xh = (cache.post[s](t, c) - mu) * inv;
        xhat(t, c) = xh;
        out(t, c) = gamma * xh + beta;
      }
    }
    cache.xhat[s] = std::move(xhat);
    cache.out[s] = std::move(out);
  }
}

// Backward through bn -> relu -> conv for one layer. d_out holds dL/d(layer
// output) per sample and is replaced by dL/d(layer input).
void conv_block_backward_batch(const std::vector<const Tensor*>& inputs,
                               TcnLayerParams& layer, const ConvLayerCache& cache,
                               std::vector<Tensor>& d_out,
                               std::vector<Tensor>& d_in) {
  const std::size_t batch = inputs.size();
  const std::size_t t_out = cache.pre[0].extent(0);
  const std::size_t ch = layer.out_channels;
  const double n = static_cast<double>(batch * t_out);

  // Batch-norm backward (train-mode statistics).
  std::vector<Tensor> d_post(batch);
  for (std::size_t s = 0; s < batch; ++s) d_post[s] = Tensor(cache.post[s].shape());
  for (std::size_t c = 0; c < ch; ++c) {
    const double gamma = layer.gamma.value[c];
    const double inv = cache.inv_std[c];
    const double mu = cache.mean[c];
    double dgamma = 0.0, dbeta = 0.0;
    double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t t = 0; t < t_out; ++t) {
        const double dy = d_out[s](t, c);
        dgamma += dy * cache.xhat[s](t, c);
        dbeta += dy;
        const double dxhat = dy * gamma;
        sum_dxhat += dxhat;
        sum_dxhat_xc += dxhat * (cache.post[s](t, c) - mu);
      }
    }
    layer.gamma.grad[c] += dgamma;
    layer.beta.grad[c] += dbeta;
    const double dvar = sum_dxhat_xc * (-0.5) * inv * inv * inv;
    const double dmu = -sum_dxhat * inv;
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t t = 0; t < t_out; ++t) {
        const double dxhat = d_out[s](t, c) * gamma;
        const double xc = cache.post[s](t, c) - mu;
        d_post[s](t, c) = dxhat * inv + dvar * 2.0 * xc / n + dmu / n;
      }
    }
  }

  // relu + conv backward.
  const std::size_t in_ch = layer.in_channels, k = layer.kernel;
  d_in.resize(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    d_in[s] = Tensor(inputs[s]->shape());
    const Tensor& x = *inputs[s];
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t o = 0; o < ch; ++o) {
        if (cache.pre[s](t, o) <= 0.0) continue;
        const double dz = d_post[s](t, o);
        layer.b.grad[o] += dz;
        for (std::size_t j = 0; j < in_ch; ++j) {
          for (std::size_t tau = 0; tau < k; ++tau) {
            layer.w.grad(o, j, tau) += dz * x(t + tau, j);
            d_in[s](t + tau, j) += dz * layer.w.value(o, j, tau);
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<Param*> LstmParams::params() {
  return {&w_f, &w_i, &w_o, &w_c, &u_f, &u_i, &u_o, &u_c,
          &b_f, &b_i, &b_o, &b_c};
}

std::vector<Param*> ViewEncoderParams::params() {
  std::vector<Param*> out = lstm.params();
  for (Param* p : attention.params()) out.push_back(p);
  for (auto& layer : tcn) {
    for (Param* p : layer.params()) out.push_back(p);
  }
  out.push_back(&cls_w);
  out.push_back(&cls_b);
  return out;
}

void ViewEncoderParams::zero_grads() {
  for (Param* p : params()) p->zero_grad();
}

ViewEncoderParams make_view_encoder(std::size_t input_dim, std::size_t seq_len,
                                    std::size_t num_classes, std::size_t d_global,
                                    const std::vector<std::size_t>& conv_channels,
                                    const std::vector<std::size_t>& conv_kernels,
                                    const std::string& name_prefix, Rng& rng) {
  if (conv_channels.empty() || conv_channels.size() != conv_kernels.size()) {
    throw std::invalid_argument("encoder: conv channel/kernel lists must be non-empty and equal length");
  }
  ViewEncoderParams p;
  p.seq_len = seq_len;
  p.num_classes = num_classes;

  p.lstm.input_dim = input_dim;
  p.lstm.hidden_dim = d_global;
  auto w = [&](const char* n, std::size_t rows, std::size_t cols) {
    return Param(name_prefix + n, init_weight({rows, cols}, cols, rng));
  };
  p.lstm.w_f = w(".lstm.w_f", d_global, input_dim);
  p.lstm.w_i = w(".lstm.w_i", d_global, input_dim);
  p.lstm.w_o = w(".lstm.w_o", d_global, input_dim);
  p.lstm.w_c = w(".lstm.w_c", d_global, input_dim);
  p.lstm.u_f = w(".lstm.u_f", d_global, d_global);
  p.lstm.u_i = w(".lstm.u_i", d_global, d_global);
  p.lstm.u_o = w(".lstm.u_o", d_global, d_global);
  p.lstm.u_c = w(".lstm.u_c", d_global, d_global);
  p.lstm.b_f = Param(name_prefix + ".lstm.b_f", Tensor({d_global}));
  p.lstm.b_i = Param(name_prefix + ".lstm.b_i", Tensor({d_global}));
  p.lstm.b_o = Param(name_prefix + ".lstm.b_o", Tensor({d_global}));
  p.lstm.b_c = Param(name_prefix + ".lstm.b_c", Tensor({d_global}));

  p.attention.logits = Param(name_prefix + ".attn.logits", Tensor({seq_len}));

  std::size_t t_len = seq_len;
  std::size_t in_ch = input_dim;
  for (std::size_t m = 0; m < conv_channels.size(); ++m) {
    const std::size_t out_ch = conv_channels[m], k = conv_kernels[m];
    if (k == 0 || t_len < k) {
      throw std::invalid_argument("encoder: sequence shorter than conv kernel at layer " +
                                  std::to_string(m));
    }
    TcnLayerParams layer;
    layer.in_channels = in_ch;
    layer.out_channels = out_ch;
    layer.kernel = k;
    const std::string ln = name_prefix + ".tcn" + std::to_string(m);
    layer.w = Param(ln + ".w", init_weight({out_ch, in_ch, k}, in_ch * k, rng));
    layer.b = Param(ln + ".b", Tensor({out_ch}));
    layer.gamma = Param(ln + ".gamma", Tensor({out_ch}));
    layer.gamma.value.fill(1.0);
    layer.beta = Param(ln + ".beta", Tensor({out_ch}));
    layer.running_mean = Tensor({out_ch});
    layer.running_var = Tensor({out_ch});
    layer.running_var.fill(1.0);
    p.tcn.push_back(std::move(layer));
    t_len = t_len - k + 1;
    in_ch = out_ch;
  }

  const std::size_t dv = d_global + in_ch;
  p.cls_w = Param(name_prefix + ".cls.w", init_weight({num_classes, dv}, dv, rng));
  p.cls_b = Param(name_prefix + ".cls.b", Tensor({num_classes}));
  return p;
}

Tensor lstm_forward(const Tensor& x, const LstmParams& p) {
  return lstm_forward_cached(x, p, nullptr);
}

Tensor attention_pool(const Tensor& hseq, const AttentionParams& a) {
  if (hseq.rank() != 2 || hseq.extent(0) != a.logits.value.size()) {
    throw std::invalid_argument("attention_pool: sequence length " +
                                shape_str(hseq.shape()) + " does not match T=" +
                                std::to_string(a.logits.value.size()));
  }
  const Tensor w = a.weights();
  const std::size_t T = hseq.extent(0), d = hseq.extent(1);
  Tensor out({d});
  for (std::size_t t = 0; t < T; ++t) {
    const double wt = w[t];
    for (std::size_t j = 0; j < d; ++j) out[j] += wt * hseq(t, j);
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 3) {
    throw std::invalid_argument("conv1d: expected rank-2 input and rank-3 weights");
  }
  const std::size_t t_in = x.extent(0), in_ch = x.extent(1);
  const std::size_t out_ch = w.extent(0), k = w.extent(2);
  if (w.extent(1) != in_ch) {
    throw std::invalid_argument("conv1d: channel mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(w.shape()));
  }
  if (t_in < k) {
    throw std::invalid_argument("conv1d: input shorter than kernel (" +
                                std::to_string(t_in) + " < " + std::to_string(k) + ")");
  }
  const std::size_t t_out = t_in - k + 1;
  Tensor out({t_out, out_ch});
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      double acc = b[o];
      for (std::size_t j = 0; j < in_ch; ++j) {
        for (std::size_t tau = 0; tau < k; ++tau) {
          acc += w(o, j, tau) * x(t + tau, j);
        }
      }
      out(t, o) = acc;
    }
  }
  return out;
}

Tensor conv1d_block(const Tensor& x, TcnLayerParams& layer, Mode mode) {
  ConvLayerCache cache;
  std::vector<const Tensor*> one{&x};
  conv_block_forward_batch(one, layer, mode, /*update_running_stats=*/mode == Mode::kTrain,
                           cache);
  return cache.out[0];
}

Tensor global_avg_pool(const Tensor& f) {
  if (f.rank() != 2) throw std::invalid_argument("global_avg_pool: expected rank-2");
  const std::size_t T = f.extent(0), d = f.extent(1);
  Tensor out({d});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) out[j] += f(t, j);
  }
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(T);
  return out;
}

Tensor encode_view(const Tensor& x, ViewEncoderParams& p, Mode mode) {
  const Tensor hseq = lstm_forward(x, p.lstm);
  const Tensor hg = attention_pool(hseq, p.attention);
  Tensor f = x;
  for (auto& layer : p.tcn) f = conv1d_block(f, layer, mode);
  const Tensor hl = global_avg_pool(f);
  Tensor h({hg.size() + hl.size()});
  for (std::size_t j = 0; j < hg.size(); ++j) h[j] = hg[j];
  for (std::size_t j = 0; j < hl.size(); ++j) h[hg.size() + j] = hl[j];
  return h;
}

Tensor classify_view(const Tensor& h, const ViewEncoderParams& p) {
  if (h.size() != p.cls_w.value.extent(1)) {
    throw std::invalid_argument("classify_view: feature width " +
                                std::to_string(h.size()) + " != classifier input " +
                                std::to_string(p.cls_w.value.extent(1)));
  }
  Tensor logits({p.num_classes});
  for (std::size_t r = 0; r < p.num_classes; ++r) logits[r] = p.cls_b.value[r];
  matvec_acc(p.cls_w.value, h.data(), logits.data());
  return softmax(logits);
}

namespace {

// Everything one batched forward pass produces, kept for the backward pass.
struct ViewBatchCache {
  std::vector<LstmCache> lstm;
  Tensor attn_weights;
  std::vector<Tensor> hg;
  std::vector<ConvLayerCache> conv;  // per layer
  std::vector<Tensor> features;      // per-sample concat(H_g, H_l)
  std::vector<Tensor> probs;
};

double view_forward_impl(const std::vector<const Tensor*>& batch_x,
                         const std::vector<std::size_t>* labels,
                         ViewEncoderParams& p, Mode mode, bool update_running,
                         ViewBatchCache& cache) {
  const std::size_t batch = batch_x.size();
  if (batch == 0) throw std::invalid_argument("view forward: empty batch");
  cache.lstm.resize(batch);
  cache.hg.resize(batch);
  cache.attn_weights = p.attention.weights();
  const std::size_t d = p.lstm.hidden_dim;
  for (std::size_t s = 0; s < batch; ++s) {
    const Tensor hseq = lstm_forward_cached(*batch_x[s], p.lstm, &cache.lstm[s]);
    Tensor hg({d});
    for (std::size_t t = 0; t < hseq.extent(0); ++t) {
      const double wt = cache.attn_weights[t];
      for (std::size_t j = 0; j < d; ++j) hg[j] += wt * hseq(t, j);
    }
    cache.hg[s] = std::move(hg);
  }

  cache.conv.resize(p.tcn.size());
  std::vector<const Tensor*> cur = batch_x;
  for (std::size_t m = 0; m < p.tcn.size(); ++m) {
    conv_block_forward_batch(cur, p.tcn[m], mode, update_running, cache.conv[m]);
    cur.clear();
    for (const Tensor& t : cache.conv[m].out) cur.push_back(&t);
  }

  cache.features.resize(batch);
  cache.probs.resize(batch);
  double loss = 0.0;
  const std::size_t dl = p.d_local();
  for (std::size_t s = 0; s < batch; ++s) {
    const Tensor hl = global_avg_pool(cache.conv.back().out[s]);
    Tensor h({d + dl});
    for (std::size_t j = 0; j < d; ++j) h[j] = cache.hg[s][j];
    for (std::size_t j = 0; j < dl; ++j) h[d + j] = hl[j];
    cache.probs[s] = classify_view(h, p);
    cache.features[s] = std::move(h);
    if (labels) loss += cross_entropy(cache.probs[s], (*labels)[s]);
  }
  return labels ? loss / static_cast<double>(batch) : 0.0;
}

}  // namespace

std::vector<Tensor> view_forward_batch(const std::vector<const Tensor*>& batch_x,
                                       ViewEncoderParams& p, Mode mode,
                                       bool update_running_stats) {
  ViewBatchCache cache;
  view_forward_impl(batch_x, nullptr, p, mode, update_running_stats, cache);
  return std::move(cache.probs);
}

double view_batch_loss(const std::vector<const Tensor*>& batch_x,
                       const std::vector<std::size_t>& labels,
                       ViewEncoderParams& p) {
  if (batch_x.size() != labels.size()) {
    throw std::invalid_argument("view_batch_loss: batch/label size mismatch");
  }
  ViewBatchCache cache;
  return view_forward_impl(batch_x, &labels, p, Mode::kTrain,
                           /*update_running=*/false, cache);
}

ViewBatchResult view_loss_and_grads(const std::vector<const Tensor*>& batch_x,
                                    const std::vector<std::size_t>& labels,
                                    ViewEncoderParams& p, bool update_running_stats) {
  if (batch_x.empty()) throw std::invalid_argument("view_loss_and_grads: empty batch");
  if (batch_x.size() != labels.size()) {
    throw std::invalid_argument("view_loss_and_grads: batch/label size mismatch");
  }
  ViewBatchCache cache;
  const double loss = view_forward_impl(batch_x, &labels, p, Mode::kTrain,
                                        update_running_stats, cache);
  p.zero_grads();

  const std::size_t batch = batch_x.size();
  const std::size_t d = p.lstm.hidden_dim, dl = p.d_local();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  std::vector<Tensor> d_conv_out(batch);
  const std::size_t t_last = cache.conv.back().out[0].extent(0);
  for (std::size_t s = 0; s < batch; ++s) {
    d_conv_out[s] = Tensor({t_last, dl});
  }
  Tensor d_attn_weights({cache.attn_weights.size()});
  std::vector<Tensor> d_hg(batch);

  for (std::size_t s = 0; s < batch; ++s) {
    // classifier head
    const Tensor dp = cross_entropy_backward(cache.probs[s], labels[s]);
    Tensor dlogits = softmax_backward(cache.probs[s], dp);
    for (std::size_t k = 0; k < dlogits.size(); ++k) dlogits[k] *= inv_batch;
    outer_acc(p.cls_w.grad, dlogits.data(), cache.features[s].data());
    for (std::size_t k = 0; k < dlogits.size(); ++k) p.cls_b.grad[k] += dlogits[k];
    Tensor dh({d + dl});
    matvec_t_acc(p.cls_w.value, dlogits.data(), dh.data());

    // split: global stream / local stream
    d_hg[s] = Tensor({d});
    for (std::size_t j = 0; j < d; ++j) d_hg[s][j] = dh[j];
    // global average pool backward
    for (std::size_t t = 0; t < t_last; ++t) {
      for (std::size_t j = 0; j < dl; ++j) {
        d_conv_out[s](t, j) = dh[d + j] / static_cast<double>(t_last);
      }
    }
  }

  // conv stack backward, deepest layer first
  std::vector<Tensor> d_cur = std::move(d_conv_out);
  for (std::size_t m = p.tcn.size(); m-- > 0;) {
    std::vector<const Tensor*> layer_in;
    if (m == 0) {
      layer_in = batch_x;
    } else {
      for (const Tensor& t : cache.conv[m - 1].out) layer_in.push_back(&t);
    }
    std::vector<Tensor> d_prev;
    conv_block_backward_batch(layer_in, p.tcn[m], cache.conv[m], d_cur, d_prev);
    d_cur = std::move(d_prev);
  }

  // attention + lstm backward
  for (std::size_t s = 0; s < batch; ++s) {
    const Tensor& hseq = cache.lstm[s].h;
    const std::size_t T = hseq.extent(0);
    Tensor dh_seq({T, d});
    for (std::size_t t = 0; t < T; ++t) {
      const double wt = cache.attn_weights[t];
      double dwt = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dh_seq(t, j) = wt * d_hg[s][j];
        dwt += d_hg[s][j] * hseq(t, j);
      }
      d_attn_weights[t] += dwt;
    }
    lstm_backward(*batch_x[s], p.lstm, cache.lstm[s], dh_seq, p.lstm);
  }
  const Tensor d_logits_attn = softmax_backward(cache.attn_weights, d_attn_weights);
  for (std::size_t t = 0; t < d_logits_attn.size(); ++t) {
    p.attention.logits.grad[t] += d_logits_attn[t];
  }

  ViewBatchResult result;
  result.loss = loss;
  result.probs = std::move(cache.probs);
  return result;
}

}  // namespace c2af
