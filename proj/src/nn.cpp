#include "respoof/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "respoof/errors.hpp"

namespace respoof::nn {

Tensor image_to_tensor(const Image& img) {
  Tensor t(3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

Image tensor_to_image(const Tensor& t) {
  Image img(t.h, t.w);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

ConvNet::ConvNet(ConvNetSpec spec, Rng& rng) : spec_(std::move(spec)) {
  build_layout();
  // He-normal for conv and fc weights, zero biases.
  for (const auto& cm : convs_) {
    const double std = std::sqrt(2.0 / (cm.in_ch * 9.0));
    for (size_t i = 0; i < static_cast<size_t>(cm.out_ch) * cm.in_ch * 9; ++i)
      params_[cm.w_off + i] = rng.normal(0.0, std);
  }
  for (const auto& fm : fcs_) {
    const double std = std::sqrt(2.0 / fm.in_dim);
    for (size_t i = 0; i < static_cast<size_t>(fm.out_dim) * fm.in_dim; ++i)
      params_[fm.w_off + i] = rng.normal(0.0, std);
  }
}

void ConvNet::build_layout() {
  convs_.clear();
  fcs_.clear();
  int side = spec_.input_side;
  int ch = spec_.input_ch;
  size_t off = 0;
  for (int oc : spec_.conv_channels) {
    if (side % 2 != 0) throw RejectedInput("ConvNet: input side not divisible by pools");
    ConvMeta m{ch, oc, side, off, off + static_cast<size_t>(oc) * ch * 9};
    off = m.b_off + static_cast<size_t>(oc);
    convs_.push_back(m);
    ch = oc;
    side /= 2;
  }
  int dim = ch * side * side;
  for (int od : spec_.fc_dims) {
    FcMeta m{dim, od, off, off + static_cast<size_t>(od) * dim};
    off = m.b_off + static_cast<size_t>(od);
    fcs_.push_back(m);
    dim = od;
  }
  params_.assign(off, 0.0);
}

namespace {

void conv3x3_forward(const Tensor& in, Tensor& out, const double* w, const double* b) {
  const int H = in.h, W = in.w;
  for (int oc = 0; oc < out.ch; ++oc) {
    double* op = out.plane(oc);
    const double bias = b[oc];
    for (int i = 0; i < H * W; ++i) op[i] = bias;
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      const double* wk = w + (static_cast<size_t>(oc) * in.ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wk[ky * 3 + kx];
          if (wv == 0.0) continue;
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            double* orow = op + static_cast<size_t>(y) * W;
            const double* irow = ip + static_cast<size_t>(y + ky - 1) * W + (kx - 1);
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// dIn += conv-transpose(dOut); dW += correlation(in, dOut); db += sum(dOut).
void conv3x3_backward(const Tensor& in, const Tensor& dout, const double* w,
                      Tensor* din, double* dw, double* db) {
  const int H = in.h, W = in.w;
  for (int oc = 0; oc < dout.ch; ++oc) {
    const double* dop = dout.plane(oc);
    if (db) {
      double s = 0.0;
      for (int i = 0; i < H * W; ++i) s += dop[i];
      db[oc] += s;
    }
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      double* dip = din ? din->plane(ic) : nullptr;
      const size_t k_off = (static_cast<size_t>(oc) * in.ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          if (dw) {
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* dorow = dop + static_cast<size_t>(y) * W;
              const double* irow = ip + static_cast<size_t>(y + ky - 1) * W + (kx - 1);
              for (int x = x0; x < x1; ++x) acc += dorow[x] * irow[x];
            }
            dw[k_off + static_cast<size_t>(ky) * 3 + kx] += acc;
          }
          if (dip) {
            const double wv = w[k_off + static_cast<size_t>(ky) * 3 + kx];
            if (wv == 0.0) continue;
            for (int y = y0; y < y1; ++y) {
              const double* dorow = dop + static_cast<size_t>(y) * W;
              double* dirow = dip + static_cast<size_t>(y + ky - 1) * W + (kx - 1);
              for (int x = x0; x < x1; ++x) dirow[x] += wv * dorow[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<double> ConvNet::forward(const Tensor& x, Trace* trace) const {
  if (x.ch != spec_.input_ch || x.h != spec_.input_side || x.w != spec_.input_side)
    throw RejectedInput("ConvNet::forward: input shape mismatch");
  Tensor cur = x;
  if (trace) {
    trace->conv_in.clear();
    trace->conv_pre.clear();
    trace->pool_src.clear();
    trace->fc_in.clear();
    trace->fc_pre.clear();
  }
  for (const auto& cm : convs_) {
    Tensor pre(cm.out_ch, cur.h, cur.w);
    conv3x3_forward(cur, pre, params_.data() + cm.w_off, params_.data() + cm.b_off);
    // relu + 2x2 maxpool in one sweep
    Tensor pooled(cm.out_ch, cur.h / 2, cur.w / 2);
    std::vector<int> src(pooled.v.size());
    for (int c = 0; c < pooled.ch; ++c) {
      for (int y = 0; y < pooled.h; ++y) {
        for (int xx = 0; xx < pooled.w; ++xx) {
          double best = -1.0;  // relu floor: any activation <= 0 pools to 0
          int best_idx = -1;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int yy = 2 * y + dy, xs = 2 * xx + dx;
              const double v = pre.at(c, yy, xs);
              if (v > best) {
                best = v;
                best_idx = (c * pre.h + yy) * pre.w + xs;
              }
            }
          }
          pooled.at(c, y, xx) = std::max(0.0, best);
          src[(static_cast<size_t>(c) * pooled.h + y) * pooled.w + xx] = best >= 0.0 ? best_idx : -1;
        }
      }
    }
    if (trace) {
      trace->conv_in.push_back(std::move(cur));
      trace->conv_pre.push_back(std::move(pre));
      trace->pool_src.push_back(std::move(src));
    }
    cur = std::move(pooled);
  }
  std::vector<double> vec = std::move(cur.v);
  for (size_t li = 0; li < fcs_.size(); ++li) {
    const auto& fm = fcs_[li];
    std::vector<double> out(static_cast<size_t>(fm.out_dim));
    const double* w = params_.data() + fm.w_off;
    const double* b = params_.data() + fm.b_off;
    for (int o = 0; o < fm.out_dim; ++o) {
      const double* wr = w + static_cast<size_t>(o) * fm.in_dim;
      double acc = b[o];
      for (int i = 0; i < fm.in_dim; ++i) acc += wr[i] * vec[static_cast<size_t>(i)];
      out[static_cast<size_t>(o)] = acc;
    }
    if (trace) {
      trace->fc_in.push_back(vec);
      trace->fc_pre.push_back(out);
    }
    if (li + 1 < fcs_.size()) {
      for (auto& v : out) v = std::max(0.0, v);
    }
    vec = std::move(out);
  }
  return vec;
}

Tensor ConvNet::backward(const Trace& trace, const std::vector<double>& dout,
                         std::vector<double>* gparams, bool want_dx) const {
  if (gparams && gparams->size() != params_.size())
    throw RejectedInput("ConvNet::backward: gradient buffer size mismatch");
  std::vector<double> dvec = dout;
  for (int li = static_cast<int>(fcs_.size()) - 1; li >= 0; --li) {
    const auto& fm = fcs_[static_cast<size_t>(li)];
    const auto& in = trace.fc_in[static_cast<size_t>(li)];
    const auto& pre = trace.fc_pre[static_cast<size_t>(li)];
    // relu between fc layers: mask the incoming gradient of non-final layers
    if (li + 1 < static_cast<int>(fcs_.size())) {
      for (int o = 0; o < fm.out_dim; ++o)
        if (pre[static_cast<size_t>(o)] <= 0.0) dvec[static_cast<size_t>(o)] = 0.0;
    }
    const double* w = params_.data() + fm.w_off;
    std::vector<double> din(static_cast<size_t>(fm.in_dim), 0.0);
    for (int o = 0; o < fm.out_dim; ++o) {
      const double g = dvec[static_cast<size_t>(o)];
      if (gparams) {
        double* gw = gparams->data() + fm.w_off + static_cast<size_t>(o) * fm.in_dim;
        for (int i = 0; i < fm.in_dim; ++i) gw[i] += g * in[static_cast<size_t>(i)];
        (*gparams)[fm.b_off + static_cast<size_t>(o)] += g;
      }
      const double* wr = w + static_cast<size_t>(o) * fm.in_dim;
      for (int i = 0; i < fm.in_dim; ++i) din[static_cast<size_t>(i)] += g * wr[i];
    }
    dvec = std::move(din);
  }
  // reshape into the last pooled tensor
  const auto& last = convs_.back();
  Tensor dcur(last.out_ch, last.side_in / 2, last.side_in / 2);
  dcur.v = std::move(dvec);
  for (int li = static_cast<int>(convs_.size()) - 1; li >= 0; --li) {
    const auto& cm = convs_[static_cast<size_t>(li)];
    const auto& pre = trace.conv_pre[static_cast<size_t>(li)];
    const auto& src = trace.pool_src[static_cast<size_t>(li)];
    Tensor dpre(pre.ch, pre.h, pre.w);
    for (size_t i = 0; i < dcur.v.size(); ++i) {
      const int idx = src[i];
      if (idx >= 0 && pre.v[static_cast<size_t>(idx)] > 0.0)
        dpre.v[static_cast<size_t>(idx)] += dcur.v[i];
    }
    const bool need_dx = want_dx || li > 0;
    Tensor din;
    if (need_dx) din = Tensor(cm.in_ch, cm.side_in, cm.side_in);
    conv3x3_backward(trace.conv_in[static_cast<size_t>(li)], dpre,
                     params_.data() + cm.w_off, need_dx ? &din : nullptr,
                     gparams ? gparams->data() + cm.w_off : nullptr,
                     gparams ? gparams->data() + cm.b_off : nullptr);
    dcur = std::move(din);
  }
  return dcur;
}

std::vector<double> ConvNet::feature(const Tensor& x, int fc_index) const {
  Trace tr;
  forward(x, &tr);
  return tr.fc_pre.at(static_cast<size_t>(fc_index));
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double softmax_ce(const std::vector<double>& logits, int target,
                  std::vector<double>* dlogits) {
  const auto p = softmax(logits);
  const double loss = -std::log(std::max(p[static_cast<size_t>(target)], 1e-300));
  if (dlogits) {
    dlogits->assign(p.begin(), p.end());
    (*dlogits)[static_cast<size_t>(target)] -= 1.0;
  }
  return loss;
}

Adam::Adam(size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw RejectedInput("Adam::step: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double mh = m_[i] / bc1;
    const double vh = v_[i] / bc2;
    params[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
  }
}

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_models(const std::string& path, const std::map<std::string, ConvNet>& models) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write: " + path);
  os.write("RSPF", 4);
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(models.size()));
  for (const auto& [name, net] : models) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& s = net.spec();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.input_side));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.input_ch));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.conv_channels.size()));
    for (int c : s.conv_channels) put<std::uint32_t>(os, static_cast<std::uint32_t>(c));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.fc_dims.size()));
    for (int d : s.fc_dims) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    put<std::uint64_t>(os, net.param_count());
    os.write(reinterpret_cast<const char*>(net.params().data()),
             static_cast<std::streamsize>(net.param_count() * sizeof(double)));
  }
}

std::map<std::string, ConvNet> load_models(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("cannot open model file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "RSPF", 4) != 0) throw std::runtime_error("bad model file magic: " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("unsupported model file version");
  const auto count = get<std::uint32_t>(is);
  std::map<std::string, ConvNet> out;
  Rng dummy(0);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    ConvNetSpec s;
    s.input_side = static_cast<int>(get<std::uint32_t>(is));
    s.input_ch = static_cast<int>(get<std::uint32_t>(is));
    const auto nc = get<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < nc; ++k) s.conv_channels.push_back(static_cast<int>(get<std::uint32_t>(is)));
    const auto nf = get<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < nf; ++k) s.fc_dims.push_back(static_cast<int>(get<std::uint32_t>(is)));
    const auto pc = get<std::uint64_t>(is);
    ConvNet net(s, dummy);
    if (net.param_count() != pc) throw std::runtime_error("model file param count mismatch");
    is.read(reinterpret_cast<char*>(net.params().data()),
            static_cast<std::streamsize>(pc * sizeof(double)));
    if (!is) throw std::runtime_error("truncated model file: " + path);
    out.emplace(name, std::move(net));
  }
  return out;
}

}  // namespace respoof::nn
