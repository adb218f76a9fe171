#ifndef SPECGRID_HRGAT_HPP
#define SPECGRID_HRGAT_HPP

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "specgrid/autodiff.hpp"
#include "specgrid/hiergraph.hpp"

namespace specgrid {

struct HrGatConfig {
  std::size_t hidden = 32;       // embedding width h
  std::size_t layers = 2;        // GAT layers per zoom
  double leaky_slope = 0.2;
  double lambda = 0.1;           // spatial smoothness weight
  double learning_rate = 0.2;    // full-batch GD on the z-scored target
  std::size_t epochs = 500;
  std::uint64_t seed = 42;
};

/// All learnable tensors. Attention vectors follow the concatenation layout
/// a^T [W h_i || W h_j]: the first h entries act on the center node, the
/// last h on the neighbor.
struct HrGatParams {
  struct GatLayer {
    DenseMatrix w;     // h x h
    DenseMatrix attn;  // 2h x 1
  };

  HrGatConfig config;
  std::vector<int> zooms;              // ascending; {15} for plain GAT
  DenseMatrix w_in;                    // d x h, shared across zooms
  std::map<int, std::vector<GatLayer>> gat;
  std::map<int, DenseMatrix> w_fuse;   // h x h per zoom (multi-zoom only)
  DenseMatrix fuse_query;              // h x 1
  DenseMatrix w_out;                   // h x 1
  DenseMatrix bias_out;                // 1 x 1
  double y_mean = 0.0, y_sd = 1.0;     // output de-standardization constants

  /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor, seed-controlled.
  static HrGatParams init(std::size_t n_features, const HrGatConfig& config,
                          std::vector<int> zooms);

  /// Trainable tensors in a fixed order (checkpoint and update order).
  std::vector<std::pair<std::string, DenseMatrix*>> tensors();
  std::vector<std::pair<std::string, const DenseMatrix*>> tensors() const;
};

/// Graph slices in the layout the model consumes: per-zoom directed edges
/// (both directions of every intra edge plus a self-loop per node) with log
/// structural weights, parent alignment for fusion, and the zoom-15 intra
/// edge list for the spatial loss term.
struct ModelGraph {
  struct ZoomSlice {
    int zoom = 0;
    std::size_t n_nodes = 0;
    std::vector<std::size_t> dst, src;  // sorted by (dst, src)
    std::vector<double> log_weight;     // log of Gaussian edge weight
  };

  std::vector<int> zooms;
  std::vector<ZoomSlice> slices;                  // aligned with zooms
  static constexpr std::size_t kNoAncestor = static_cast<std::size_t>(-1);
  std::map<int, std::vector<std::size_t>> ancestor;  // zoom -> per-z15 index
  std::vector<std::pair<std::size_t, std::size_t>> z15_edges;  // undirected

  const ZoomSlice& slice(int zoom) const;

  /// hierarchical=false keeps only the zoom-15 slice (plain GAT ablation).
  static ModelGraph from(const HierGraph& graph, bool hierarchical);
};

struct Prediction {
  std::vector<double> y_hat;  // per zoom-15 node
  /// Node-adaptive fusion weights (alpha for zooms 13, 14, 15). For the
  /// plain-GAT variant the zoom-15 entry is 1.
  std::vector<std::array<double, 3>> fusion;
};

/// Full model forward pass. x maps zoom -> feature matrix for that zoom's
/// nodes (standardized upstream). Throws InvariantError on non-finite
/// activations, naming the zoom and layer.
Prediction forward(const HrGatParams& params, const ModelGraph& graph,
                   const std::map<int, DenseMatrix>& x);

struct LossBreakdown {
  double total = 0.0, mse = 0.0, spatial = 0.0;
};

/// L = (1/N) sum_i (y_i - yhat_i)^2 over mask rows, plus
/// lambda * (1/|E|) sum over zoom-15 intra edges with both ends in mask.
LossBreakdown eval_loss(const std::vector<double>& y_hat,
                        const std::vector<double>& y,
                        const std::vector<std::size_t>& mask_idx,
                        const std::vector<std::pair<std::size_t, std::size_t>>&
                            edges,
                        double lambda);

/// One tape pass: loss plus gradients for every trainable tensor.
struct LossAndGrads {
  LossBreakdown loss;
  std::map<std::string, DenseMatrix> grads;
};
LossAndGrads loss_and_gradients(const HrGatParams& params,
                                const ModelGraph& graph,
                                const std::map<int, DenseMatrix>& x,
                                const std::vector<double>& y,
                                const std::vector<std::size_t>& mask_idx);

struct TraceEntry {
  std::size_t epoch;
  double total, mse, spatial;
};

struct TrainResult {
  HrGatParams params;
  std::vector<TraceEntry> trace;
};

/// Full-batch gradient descent for config.epochs epochs. The target is
/// z-scored with mask statistics internally; forward() reverses the scaling,
/// so trace entries are in standardized units while predictions are not.
/// Throws InvariantError (with the epoch) if the loss goes non-finite.
TrainResult train(HrGatParams params, const ModelGraph& graph,
                  const std::map<int, DenseMatrix>& x,
                  const std::vector<double>& y,
                  const std::vector<std::size_t>& mask_idx);

// --- baselines ----------------------------------------------------------

struct LinearModel {
  std::vector<double> coef;
  double intercept = 0.0;
  std::vector<double> predict(const std::vector<std::vector<double>>& x) const;
};

/// Normal equations with ridge 1e-8 on the diagonal for conditioning.
LinearModel fit_linear(const std::vector<std::vector<double>>& x,
                       const std::vector<double>& y,
                       const std::vector<std::size_t>& rows);

struct MlpModel {
  DenseMatrix w1, b1, w2, b2, w3;  // two hidden layers, width h
  DenseMatrix b3;
  double leaky_slope = 0.2;
  double y_mean = 0.0, y_sd = 1.0;
  std::vector<double> predict(const DenseMatrix& x) const;
};

/// Per-tile two-hidden-layer net (no spatial edges), trained with the same
/// full-batch gradient descent.
MlpModel fit_mlp(const DenseMatrix& x, const std::vector<double>& y,
                 const std::vector<std::size_t>& rows,
                 const HrGatConfig& config);

// --- checkpoints ----------------------------------------------------------

/// Flat little-endian binary of doubles plus a CSV manifest
/// (name,rows,cols,offset). y_mean / y_sd ride along as 1x1 tensors.
void save_checkpoint(const HrGatParams& params, const std::string& bin_path,
                     const std::string& manifest_path);
HrGatParams load_checkpoint(const std::string& bin_path,
                            const std::string& manifest_path,
                            const HrGatConfig& config);

}  // namespace specgrid

#endif  // SPECGRID_HRGAT_HPP
