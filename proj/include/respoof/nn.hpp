#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "respoof/image.hpp"
#include "respoof/rng.hpp"

namespace respoof::nn {

/// Planar CHW tensor of doubles. Double precision throughout so that the
/// finite-difference oracles can run at tight tolerances.
struct Tensor {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_)
      : ch(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

  double& at(int c, int y, int x) {
    return v[(static_cast<size_t>(c) * h + y) * w + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * h + y) * w + x];
  }
  double* plane(int c) { return v.data() + static_cast<size_t>(c) * h * w; }
  const double* plane(int c) const { return v.data() + static_cast<size_t>(c) * h * w; }
};

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

/// Architecture: [conv3x3(pad 1) -> relu -> maxpool2]* then flatten and a
/// dense stack with relu between layers (none after the last).
/// input_side must be divisible by 2^(number of conv blocks).
struct ConvNetSpec {
  int input_side = 64;
  int input_ch = 3;
  std::vector<int> conv_channels;
  std::vector<int> fc_dims;

  bool operator==(const ConvNetSpec&) const = default;
};

class ConvNet {
 public:
  ConvNet() = default;
  ConvNet(ConvNetSpec spec, Rng& rng);  // He-initialized

  const ConvNetSpec& spec() const { return spec_; }
  size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  struct Trace {
    std::vector<Tensor> conv_in;    // input to each conv block
    std::vector<Tensor> conv_pre;   // conv output before relu
    std::vector<std::vector<int>> pool_src;  // argmax flat index per pooled cell
    std::vector<std::vector<double>> fc_in;  // input vector to each fc layer
    std::vector<std::vector<double>> fc_pre; // fc output before relu (last = logits)
  };

  /// Forward pass; fills `trace` when non-null (required for backward).
  std::vector<double> forward(const Tensor& x, Trace* trace = nullptr) const;

  /// Backprop from d(loss)/d(output). Accumulates parameter gradients into
  /// `gparams` (same layout as params) when non-null; returns d(loss)/d(input)
  /// when want_dx, else an empty tensor.
  Tensor backward(const Trace& trace, const std::vector<double>& dout,
                  std::vector<double>* gparams, bool want_dx) const;

  /// Pre-activation output of fc layer `fc_index` (0-based); used to read an
  /// embedding from a net trained with a classification head.
  std::vector<double> feature(const Tensor& x, int fc_index) const;

 private:
  ConvNetSpec spec_;
  std::vector<double> params_;
  // layout offsets
  struct ConvMeta { int in_ch, out_ch, side_in; size_t w_off, b_off; };
  struct FcMeta { int in_dim, out_dim; size_t w_off, b_off; };
  std::vector<ConvMeta> convs_;
  std::vector<FcMeta> fcs_;
  void build_layout();
};

/// Softmax cross-entropy against an integer target; returns loss and writes
/// d(loss)/d(logits).
double softmax_ce(const std::vector<double>& logits, int target,
                  std::vector<double>* dlogits);

std::vector<double> softmax(const std::vector<double>& logits);
int argmax(const std::vector<double>& v);

class Adam {
 public:
  Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grads);
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

// Weight container: a single binary file with a version header holding any
// number of named nets. Format (little-endian):
//   magic "RSPF" | u32 version=1 | u32 count
//   per net: u32 name_len | name bytes | u32 input_side | u32 input_ch
//            | u32 n_conv | u32 conv_ch[] | u32 n_fc | u32 fc_dims[]
//            | u64 param_count | f64 params[]
void save_models(const std::string& path, const std::map<std::string, ConvNet>& models);
std::map<std::string, ConvNet> load_models(const std::string& path);

}  // namespace respoof::nn
