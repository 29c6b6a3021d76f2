#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssdkit/netgraph.hpp"
#include "ssdkit/postprocess.hpp"
#include "ssdkit/priorgrid.hpp"
#include "ssdkit/weights.hpp"

namespace ssdkit {

/// Small CNN executor with hand-written forward and backward passes over a
/// NetGraph (conv, dwconv, relu, concat, detect_head). Each detect_head emits
/// per-cell blocks of A x (4 + classes) channels: four box offsets followed by
/// class logits for each of the A priors at that cell.
class ToyNet {
 public:
  /// He-initialized weights, zero biases.
  ToyNet(NetGraph graph, int num_classes, std::uint64_t init_seed);
  /// Weights taken from a store (checked against the graph).
  ToyNet(NetGraph graph, int num_classes, const WeightStore& weights);

  const NetGraph& graph() const { return graph_; }
  int num_classes() const { return num_classes_; }

  /// Fully convolutional: the same weights run at any input resolution.
  void set_input_size(int w, int h);
  int input_w() const { return graph_.input_w; }
  int input_h() const { return graph_.input_h; }

  /// Output grid (w, h) and priors per cell of each detect_head, in graph order.
  struct HeadInfo {
    std::string name;
    int grid_w = 0;
    int grid_h = 0;
    int boxes_per_location = 0;
  };
  const std::vector<HeadInfo>& heads() const { return heads_; }

  /// Throws ValidationError unless the specs line up with the heads.
  void check_priors(const std::vector<PriorSpec>& specs) const;

  /// Image is C x H x W, row-major. Activations are cached for backward().
  RawPrediction forward(std::span<const double> image);

  /// Accumulates parameter gradients for the last forward() given
  /// d loss / d raw (same layout as RawPrediction).
  void backward(std::span<const double> grad_loc, std::span<const double> grad_logits);

  void zero_grad();

  /// Momentum SGD: v = m v + lr (g / scale + wd w); w -= v.
  void sgd_step(double lr, double momentum, double weight_decay, double grad_scale);

  WeightStore to_weights() const;

  /// Flat access for gradient checks.
  std::size_t parameter_count() const;
  double& parameter(std::size_t i);
  double gradient(std::size_t i) const;

  bool all_finite() const;

 private:
  struct Params {
    std::vector<double> w, b, gw, gb, vw, vb;
  };

  void build();
  void init_weights(std::uint64_t seed);
  void load(const WeightStore& w);
  const std::vector<double>& producer_output(const std::string& name) const;
  std::vector<double>& producer_grad(const std::string& name);

  NetGraph graph_;
  int num_classes_;
  std::vector<std::size_t> order_;
  std::vector<Shape> shapes_;
  std::vector<HeadInfo> heads_;
  std::vector<std::size_t> head_layers_;
  std::vector<Params> params_;
  std::vector<std::vector<double>> out_;
  std::vector<std::vector<double>> grad_;
  std::vector<double> input_;
  std::vector<double> input_grad_;
};

/// Miniature MobileNet-SSD style graph: a strided stem conv, three
/// depth-wise separable blocks and two 3x3 detection heads on the stride-4 and
/// stride-8 maps (optionally the stride-4 head split in two).
NetGraph toy_graph(int input_w, int input_h, int num_classes, int boxes_per_location,
                   bool split_first_branch = false);

}  // namespace ssdkit
