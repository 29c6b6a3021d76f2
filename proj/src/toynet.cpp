#include "ssdkit/toynet.hpp"

#include <algorithm>
#include <cmath>

#include "ssdkit/error.hpp"
#include "ssdkit/random.hpp"

namespace ssdkit {

namespace {

struct ConvGeom {
  int cin, h, w;    // input
  int cout, oh, ow; // output
  int kh, kw, stride, pad;
  bool depthwise;
};

// Range of output columns ox for which ox*stride - pad + k lands inside [0, n).
inline void valid_range(int k, int pad, int stride, int n, int out_n, int& lo, int& hi) {
  // need 0 <= ox*stride - pad + k <= n-1
  const int a = pad - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = n - 1 + pad - k;
  hi = b < 0 ? -1 : std::min(out_n - 1, b / stride);
}

void conv_forward(const ConvGeom& g, const double* in, const double* wt, const double* bias, double* out) {
  const int groups_in = g.depthwise ? 1 : g.cin;
  for (int oc = 0; oc < g.cout; ++oc) {
    double* o = out + static_cast<std::size_t>(oc) * g.oh * g.ow;
    std::fill(o, o + static_cast<std::size_t>(g.oh) * g.ow, bias[oc]);
    for (int ic = 0; ic < groups_in; ++ic) {
      const int src_c = g.depthwise ? oc : ic;
      const double* x = in + static_cast<std::size_t>(src_c) * g.h * g.w;
      for (int ky = 0; ky < g.kh; ++ky) {
        int oy_lo, oy_hi;
        valid_range(ky, g.pad, g.stride, g.h, g.oh, oy_lo, oy_hi);
        for (int kx = 0; kx < g.kw; ++kx) {
          int ox_lo, ox_hi;
          valid_range(kx, g.pad, g.stride, g.w, g.ow, ox_lo, ox_hi);
          const double wv = wt[((static_cast<std::size_t>(oc) * groups_in + ic) * g.kh + ky) * g.kw + kx];
          const int shift = kx - g.pad;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const double* xr = x + static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
            double* orow = o + static_cast<std::size_t>(oy) * g.ow;
            if (g.stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xr[ox + shift];
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xr[ox * g.stride + shift];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const double* in, const double* wt, const double* gout, double* gin,
                   double* gw, double* gb) {
  const int groups_in = g.depthwise ? 1 : g.cin;
  for (int oc = 0; oc < g.cout; ++oc) {
    const double* go = gout + static_cast<std::size_t>(oc) * g.oh * g.ow;
    double sb = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(g.oh) * g.ow; ++i) sb += go[i];
    gb[oc] += sb;
    for (int ic = 0; ic < groups_in; ++ic) {
      const int src_c = g.depthwise ? oc : ic;
      const double* x = in + static_cast<std::size_t>(src_c) * g.h * g.w;
      double* gx = gin ? gin + static_cast<std::size_t>(src_c) * g.h * g.w : nullptr;
      for (int ky = 0; ky < g.kh; ++ky) {
        int oy_lo, oy_hi;
        valid_range(ky, g.pad, g.stride, g.h, g.oh, oy_lo, oy_hi);
        for (int kx = 0; kx < g.kw; ++kx) {
          int ox_lo, ox_hi;
          valid_range(kx, g.pad, g.stride, g.w, g.ow, ox_lo, ox_hi);
          const std::size_t widx = ((static_cast<std::size_t>(oc) * groups_in + ic) * g.kh + ky) * g.kw + kx;
          const double wv = wt[widx];
          double acc = 0;
          const int shift = kx - g.pad;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const std::size_t off = static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
            const double* xr = x + off;
            const double* gorow = go + static_cast<std::size_t>(oy) * g.ow;
            if (g.stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += gorow[ox] * xr[ox + shift];
              if (gx) {
                double* gxr = gx + off;
                for (int ox = ox_lo; ox <= ox_hi; ++ox) gxr[ox + shift] += wv * gorow[ox];
              }
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += gorow[ox] * xr[ox * g.stride + shift];
              if (gx) {
                double* gxr = gx + off;
                for (int ox = ox_lo; ox <= ox_hi; ++ox) gxr[ox * g.stride + shift] += wv * gorow[ox];
              }
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
}

}  // namespace

ToyNet::ToyNet(NetGraph graph, int num_classes, std::uint64_t init_seed)
    : graph_(std::move(graph)), num_classes_(num_classes) {
  build();
  init_weights(init_seed);
}

ToyNet::ToyNet(NetGraph graph, int num_classes, const WeightStore& weights)
    : graph_(std::move(graph)), num_classes_(num_classes) {
  build();
  load(weights);
}

void ToyNet::build() {
  if (num_classes_ < 2) throw ValidationError("toy net: need at least 2 classes");
  order_ = topo_order(graph_);
  shapes_ = infer_shapes(graph_);
  heads_.clear();
  head_layers_.clear();
  params_.assign(graph_.layers.size(), {});
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    if (l.kind == LayerKind::maxpool || l.kind == LayerKind::avgpool)
      throw ValidationError("toy net: layer '" + l.name + "': pooling is not supported by the executor");
    if (l.kind == LayerKind::detect_head) {
      const int per = 4 + num_classes_;
      if (shapes_[i].c % per != 0)
        throw ValidationError("toy net: head '" + l.name + "' channels are not a multiple of 4 + classes");
      head_layers_.push_back(i);
      heads_.push_back({l.name, shapes_[i].w, shapes_[i].h, shapes_[i].c / per});
    }
    if (has_weights(l.kind)) {
      const int cin = l.kind == LayerKind::dwconv ? 1 : input_shapes(graph_, shapes_, i).front().c;
      const std::size_t nw = static_cast<std::size_t>(shapes_[i].c) * cin * l.kernel_h * l.kernel_w;
      auto& p = params_[i];
      p.w.assign(nw, 0.0);
      p.gw.assign(nw, 0.0);
      p.vw.assign(nw, 0.0);
      p.b.assign(static_cast<std::size_t>(shapes_[i].c), 0.0);
      p.gb.assign(p.b.size(), 0.0);
      p.vb.assign(p.b.size(), 0.0);
    }
  }
  if (heads_.empty()) throw ValidationError("toy net: graph has no detect_head layer");
  for (const auto& l : graph_.layers)
    for (const auto& in : l.inputs)
      if (in == kGraphInput && l.kind == LayerKind::concat)
        throw ValidationError("toy net: concat may not read the graph input directly");
  out_.assign(graph_.layers.size(), {});
  grad_.assign(graph_.layers.size(), {});
}

void ToyNet::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    if (!has_weights(l.kind)) continue;
    const int cin = l.kind == LayerKind::dwconv ? 1 : input_shapes(graph_, shapes_, i).front().c;
    const double fan_in = static_cast<double>(cin) * l.kernel_h * l.kernel_w;
    // Heads start small so initial scores are near uniform.
    const double stdev = l.kind == LayerKind::detect_head ? 0.01 : std::sqrt(2.0 / fan_in);
    for (double& v : params_[i].w) v = stdev * rng.normal();
  }
}

void ToyNet::load(const WeightStore& w) {
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    if (!has_weights(l.kind)) continue;
    auto it = w.find(l.name);
    if (it == w.end()) throw ValidationError("toy net: no weights for layer '" + l.name + "'");
    if (it->second.data.size() != params_[i].w.size())
      throw ValidationError("toy net: weight size mismatch for layer '" + l.name + "'");
    std::copy(it->second.data.begin(), it->second.data.end(), params_[i].w.begin());
    auto b = w.find(bias_key(l.name));
    if (b != w.end()) {
      if (b->second.data.size() != params_[i].b.size())
        throw ValidationError("toy net: bias size mismatch for layer '" + l.name + "'");
      std::copy(b->second.data.begin(), b->second.data.end(), params_[i].b.begin());
    }
  }
}

void ToyNet::set_input_size(int w, int h) {
  graph_ = with_input(std::move(graph_), w, h);
  shapes_ = infer_shapes(graph_);
  for (std::size_t k = 0; k < head_layers_.size(); ++k) {
    heads_[k].grid_w = shapes_[head_layers_[k]].w;
    heads_[k].grid_h = shapes_[head_layers_[k]].h;
  }
}

void ToyNet::check_priors(const std::vector<PriorSpec>& specs) const {
  if (specs.size() != heads_.size())
    throw ValidationError("toy net: " + std::to_string(specs.size()) + " prior branches for " +
                          std::to_string(heads_.size()) + " heads");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    const auto& h = heads_[k];
    if (s.feature_map_w != h.grid_w || s.feature_map_h != h.grid_h || s.boxes_per_location() != h.boxes_per_location)
      throw ValidationError("toy net: prior branch " + std::to_string(k) + " does not match head '" + h.name + "'");
  }
}

const std::vector<double>& ToyNet::producer_output(const std::string& name) const {
  if (name == kGraphInput) return input_;
  return out_[static_cast<std::size_t>(graph_.find(name))];
}

std::vector<double>& ToyNet::producer_grad(const std::string& name) {
  if (name == kGraphInput) return input_grad_;
  return grad_[static_cast<std::size_t>(graph_.find(name))];
}

RawPrediction ToyNet::forward(std::span<const double> image) {
  const std::size_t expect = static_cast<std::size_t>(graph_.input_c) * graph_.input_h * graph_.input_w;
  if (image.size() != expect) throw ValidationError("toy net: image size does not match the input shape");
  input_.assign(image.begin(), image.end());
  for (std::size_t i : order_) {
    const Layer& l = graph_.layers[i];
    const Shape os = shapes_[i];
    auto& out = out_[i];
    out.assign(static_cast<std::size_t>(os.c) * os.h * os.w, 0.0);
    const auto& in = producer_output(l.inputs.front());
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::dwconv:
      case LayerKind::detect_head: {
        const Shape is = input_shapes(graph_, shapes_, i).front();
        const ConvGeom g{is.c, is.h, is.w, os.c, os.h, os.w, l.kernel_h, l.kernel_w, l.stride, l.pad,
                         l.kind == LayerKind::dwconv};
        conv_forward(g, in.data(), params_[i].w.data(), params_[i].b.data(), out.data());
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[k] > 0 ? in[k] : 0.0;
        break;
      case LayerKind::concat: {
        std::size_t off = 0;
        for (const auto& name : l.inputs) {
          const auto& src = producer_output(name);
          std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
          off += src.size();
        }
        break;
      }
      default:
        break;
    }
  }

  RawPrediction raw;
  raw.num_classes = num_classes_;
  const int per = 4 + num_classes_;
  std::size_t total = 0;
  for (const auto& h : heads_) total += static_cast<std::size_t>(h.grid_w) * h.grid_h * h.boxes_per_location;
  raw.loc.resize(4 * total);
  raw.logits.resize(static_cast<std::size_t>(num_classes_) * total);
  std::size_t prior = 0;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto& h = heads_[k];
    const auto& o = out_[head_layers_[k]];
    const std::size_t plane = static_cast<std::size_t>(h.grid_w) * h.grid_h;
    for (std::size_t cell = 0; cell < plane; ++cell) {
      for (int a = 0; a < h.boxes_per_location; ++a, ++prior) {
        const std::size_t base = static_cast<std::size_t>(a) * per;
        for (int j = 0; j < 4; ++j) raw.loc[4 * prior + j] = o[(base + j) * plane + cell];
        for (int c = 0; c < num_classes_; ++c)
          raw.logits[prior * num_classes_ + c] = o[(base + 4 + c) * plane + cell];
      }
    }
  }
  return raw;
}

void ToyNet::backward(std::span<const double> grad_loc, std::span<const double> grad_logits) {
  for (std::size_t i = 0; i < grad_.size(); ++i) grad_[i].assign(out_[i].size(), 0.0);
  input_grad_.assign(input_.size(), 0.0);

  const int per = 4 + num_classes_;
  std::size_t prior = 0;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto& h = heads_[k];
    auto& g = grad_[head_layers_[k]];
    const std::size_t plane = static_cast<std::size_t>(h.grid_w) * h.grid_h;
    for (std::size_t cell = 0; cell < plane; ++cell) {
      for (int a = 0; a < h.boxes_per_location; ++a, ++prior) {
        const std::size_t base = static_cast<std::size_t>(a) * per;
        for (int j = 0; j < 4; ++j) g[(base + j) * plane + cell] = grad_loc[4 * prior + j];
        for (int c = 0; c < num_classes_; ++c)
          g[(base + 4 + c) * plane + cell] = grad_logits[prior * num_classes_ + c];
      }
    }
  }
  if (grad_loc.size() != 4 * prior || grad_logits.size() != prior * num_classes_)
    throw ValidationError("toy net: gradient size does not match the head outputs");

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const std::size_t i = *it;
    const Layer& l = graph_.layers[i];
    const auto& go = grad_[i];
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::dwconv:
      case LayerKind::detect_head: {
        const Shape is = input_shapes(graph_, shapes_, i).front();
        const Shape os = shapes_[i];
        const ConvGeom g{is.c, is.h, is.w, os.c, os.h, os.w, l.kernel_h, l.kernel_w, l.stride, l.pad,
                         l.kind == LayerKind::dwconv};
        const bool needs_input_grad = l.inputs.front() != kGraphInput;
        double* gin = needs_input_grad ? producer_grad(l.inputs.front()).data() : nullptr;
        conv_backward(g, producer_output(l.inputs.front()).data(), params_[i].w.data(), go.data(), gin,
                      params_[i].gw.data(), params_[i].gb.data());
        break;
      }
      case LayerKind::relu: {
        const auto& in = producer_output(l.inputs.front());
        auto& gi = producer_grad(l.inputs.front());
        for (std::size_t k = 0; k < go.size(); ++k)
          if (in[k] > 0) gi[k] += go[k];
        break;
      }
      case LayerKind::concat: {
        std::size_t off = 0;
        for (const auto& name : l.inputs) {
          auto& gi = producer_grad(name);
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += go[off + k];
          off += gi.size();
        }
        break;
      }
      default:
        break;
    }
  }
}

void ToyNet::zero_grad() {
  for (auto& p : params_) {
    std::fill(p.gw.begin(), p.gw.end(), 0.0);
    std::fill(p.gb.begin(), p.gb.end(), 0.0);
  }
}

void ToyNet::sgd_step(double lr, double momentum, double weight_decay, double grad_scale) {
  for (auto& p : params_) {
    for (std::size_t k = 0; k < p.w.size(); ++k) {
      p.vw[k] = momentum * p.vw[k] + lr * (p.gw[k] / grad_scale + weight_decay * p.w[k]);
      p.w[k] -= p.vw[k];
    }
    for (std::size_t k = 0; k < p.b.size(); ++k) {
      p.vb[k] = momentum * p.vb[k] + lr * (p.gb[k] / grad_scale);
      p.b[k] -= p.vb[k];
    }
  }
}

WeightStore ToyNet::to_weights() const {
  WeightStore w;
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const Layer& l = graph_.layers[i];
    if (!has_weights(l.kind)) continue;
    const int cin = l.kind == LayerKind::dwconv ? 1 : input_shapes(graph_, shapes_, i).front().c;
    Tensor t;
    t.shape = {shapes_[i].c, cin, l.kernel_h, l.kernel_w};
    t.data.assign(params_[i].w.begin(), params_[i].w.end());
    w[l.name] = std::move(t);
    Tensor b;
    b.shape = {shapes_[i].c};
    b.data.assign(params_[i].b.begin(), params_[i].b.end());
    w[bias_key(l.name)] = std::move(b);
  }
  return w;
}

std::size_t ToyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.w.size() + p.b.size();
  return n;
}

double& ToyNet::parameter(std::size_t i) {
  for (auto& p : params_) {
    if (i < p.w.size()) return p.w[i];
    i -= p.w.size();
    if (i < p.b.size()) return p.b[i];
    i -= p.b.size();
  }
  throw std::out_of_range("toy net: parameter index out of range");
}

double ToyNet::gradient(std::size_t i) const {
  for (const auto& p : params_) {
    if (i < p.gw.size()) return p.gw[i];
    i -= p.gw.size();
    if (i < p.gb.size()) return p.gb[i];
    i -= p.gb.size();
  }
  throw std::out_of_range("toy net: parameter index out of range");
}

bool ToyNet::all_finite() const {
  for (const auto& p : params_) {
    for (double v : p.w)
      if (!std::isfinite(v)) return false;
    for (double v : p.b)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

NetGraph toy_graph(int input_w, int input_h, int num_classes, int boxes_per_location, bool split_first_branch) {
  NetGraph g;
  g.input_c = 1;
  g.input_w = input_w;
  g.input_h = input_h;
  auto conv = [&](std::string name, LayerKind kind, int k, int stride, int pad, int out, std::string in) {
    Layer l;
    l.name = std::move(name);
    l.kind = kind;
    l.kernel_h = l.kernel_w = k;
    l.stride = stride;
    l.pad = pad;
    l.out_channels = out;
    l.inputs = {std::move(in)};
    g.layers.push_back(std::move(l));
  };
  auto relu = [&](std::string name, std::string in) {
    Layer l;
    l.name = std::move(name);
    l.kind = LayerKind::relu;
    l.inputs = {std::move(in)};
    g.layers.push_back(std::move(l));
  };
  const int head_c = boxes_per_location * (4 + num_classes);
  conv("stem", LayerKind::conv, 3, 2, 1, 16, std::string(kGraphInput));
  relu("stem_relu", "stem");
  conv("dw1", LayerKind::dwconv, 3, 1, 1, 0, "stem_relu");
  relu("dw1_relu", "dw1");
  conv("pw1", LayerKind::conv, 1, 1, 0, 24, "dw1_relu");
  relu("pw1_relu", "pw1");
  conv("dw2", LayerKind::dwconv, 3, 2, 1, 0, "pw1_relu");
  relu("dw2_relu", "dw2");
  conv("pw2", LayerKind::conv, 1, 1, 0, 32, "dw2_relu");
  relu("pw2_relu", "pw2");
  conv("dw3", LayerKind::dwconv, 3, 2, 1, 0, "pw2_relu");
  relu("dw3_relu", "dw3");
  conv("pw3", LayerKind::conv, 1, 1, 0, 48, "dw3_relu");
  relu("pw3_relu", "pw3");
  if (split_first_branch) {
    conv("head1a", LayerKind::detect_head, 3, 1, 1, head_c, "pw2_relu");
    conv("head1b", LayerKind::detect_head, 3, 1, 1, head_c, "pw2_relu");
  } else {
    conv("head1", LayerKind::detect_head, 3, 1, 1, head_c, "pw2_relu");
  }
  conv("head2", LayerKind::detect_head, 3, 1, 1, head_c, "pw3_relu");
  return g;
}

}  // namespace ssdkit
