#ifndef SPECGRID_HIERGRAPH_HPP
#define SPECGRID_HIERGRAPH_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specgrid/ingest.hpp"

namespace specgrid {

/// Hierarchical multi-resolution graph over the feature-table tile universe.
/// Intra-zoom edges join 8-neighbors with Gaussian weights on centroid
/// geodesic distance; inter-zoom edges join children to parents with unit
/// weight. Immutable once built.
class HierGraph {
 public:
  struct IntraEdge {
    std::size_t i, j;  // global node indices, i < j, same zoom
    double weight;     // exp(-d^2 / sigma^2), in (0, 1]
  };
  struct InterEdge {
    std::size_t child, parent;  // global node indices, weight fixed at 1
  };

  /// One sigma (meters) for every zoom. Throws DataError when sigma <= 0.
  static HierGraph build(const FeatureTable& table, double sigma);
  /// Per-zoom default sigma: tile width in meters at the mean study latitude.
  static HierGraph build_auto(const FeatureTable& table);

  std::size_t node_count() const { return node_zoom_.size(); }
  int node_zoom(std::size_t node) const { return node_zoom_.at(node); }
  const TileId& node_tile(std::size_t node) const;

  /// Global index of a zoom-local node.
  std::size_t global_index(int zoom, std::size_t local) const;
  std::size_t zoom_offset(int zoom) const;
  std::size_t zoom_size(int zoom) const;

  /// Same-zoom weighted neighbors of a node, ordered by node index.
  /// Throws DataError for an out-of-range node.
  const std::vector<std::pair<std::size_t, double>>& neighborhood(
      std::size_t node) const;

  /// Parent node (zoom-1) if present in the universe.
  std::optional<std::size_t> parent_node(std::size_t node) const;

  const std::vector<IntraEdge>& intra_edges() const { return intra_; }
  const std::vector<InterEdge>& inter_edges() const { return inter_; }
  double sigma(int zoom) const;

  /// Edge list as CSV text: src_quadkey,dst_quadkey,kind,weight.
  /// Byte-identical for identical inputs.
  std::string serialize_edges() const;
  void write_edges_csv(const std::string& path) const;

 private:
  HierGraph() = default;
  static HierGraph build_impl(const FeatureTable& table,
                              std::map<int, double> sigma_by_zoom);

  std::map<int, std::size_t> offset_;  // zoom -> first global index
  std::map<int, std::size_t> size_;    // zoom -> node count at that zoom
  std::vector<TileId> tiles_;          // per global node
  std::vector<int> node_zoom_;             // per global node
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<IntraEdge> intra_;
  std::vector<InterEdge> inter_;
  std::map<int, double> sigma_;
};

}  // namespace specgrid

#endif  // SPECGRID_HIERGRAPH_HPP
