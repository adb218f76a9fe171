#include "specgrid/hiergraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"

namespace specgrid {

namespace {

constexpr double kPi = 3.14159265358979323846;

HierGraph::IntraEdge make_intra(std::size_t i, std::size_t j, double w) {
  return i < j ? HierGraph::IntraEdge{i, j, w} : HierGraph::IntraEdge{j, i, w};
}

}  // namespace

const TileId& HierGraph::node_tile(std::size_t node) const {
  if (node >= tiles_.size()) throw DataError("HierGraph: unknown node");
  return tiles_[node];
}

std::size_t HierGraph::global_index(int zoom, std::size_t local) const {
  return zoom_offset(zoom) + local;
}

std::size_t HierGraph::zoom_offset(int zoom) const {
  const auto it = offset_.find(zoom);
  if (it == offset_.end()) throw DataError("HierGraph: no such zoom");
  return it->second;
}

std::size_t HierGraph::zoom_size(int zoom) const {
  const auto it = size_.find(zoom);
  if (it == size_.end()) throw DataError("HierGraph: no such zoom");
  return it->second;
}

const std::vector<std::pair<std::size_t, double>>& HierGraph::neighborhood(
    std::size_t node) const {
  if (node >= adj_.size()) throw DataError("HierGraph: unknown node");
  return adj_[node];
}

std::optional<std::size_t> HierGraph::parent_node(std::size_t node) const {
  if (node >= parent_.size()) throw DataError("HierGraph: unknown node");
  return parent_[node];
}

double HierGraph::sigma(int zoom) const {
  const auto it = sigma_.find(zoom);
  if (it == sigma_.end()) throw DataError("HierGraph: no such zoom");
  return it->second;
}

HierGraph HierGraph::build(const FeatureTable& table, double sigma) {
  if (!(sigma > 0.0))
    throw DataError("build_graph: sigma must be positive meters");
  return build_impl(table, {{13, sigma}, {14, sigma}, {15, sigma}});
}

HierGraph HierGraph::build_auto(const FeatureTable& table) {
  double lat_sum = 0.0;
  for (const TileId& t : table.z15.grid.tiles()) lat_sum += centroid(t).lat;
  const double lat = lat_sum / static_cast<double>(table.z15.grid.size());
  const double circ = 2.0 * kPi * kEarthRadiusM * std::cos(lat * kPi / 180.0);
  std::map<int, double> sigma;
  for (int z = kZoomMin; z <= kZoomMax; ++z)
    sigma[z] = circ / static_cast<double>(std::uint64_t{1} << z);
  return build_impl(table, std::move(sigma));
}

HierGraph HierGraph::build_impl(const FeatureTable& table,
                                std::map<int, double> sigma_by_zoom) {
  HierGraph g;
  g.sigma_ = std::move(sigma_by_zoom);

  for (int z = kZoomMin; z <= kZoomMax; ++z) {
    const ZoomLayer& layer = table.layer(z);
    g.offset_[z] = g.tiles_.size();
    g.size_[z] = layer.grid.size();
    for (const TileId& t : layer.grid.tiles()) {
      g.tiles_.push_back(t);
      g.node_zoom_.push_back(z);
    }
  }
  const std::size_t n = g.tiles_.size();
  g.adj_.resize(n);
  g.parent_.assign(n, std::nullopt);

  // Intra-zoom edges: 8-neighbors present in the universe, Gaussian weight
  // on centroid geodesic distance. Each undirected edge is stored once.
  for (int z = kZoomMin; z <= kZoomMax; ++z) {
    const ZoomLayer& layer = table.layer(z);
    const double sigma = g.sigma_.at(z);
    const std::size_t off = g.offset_.at(z);
    for (std::size_t i = 0; i < layer.grid.size(); ++i) {
      const GeoPoint ci = centroid(layer.grid.tiles()[i]);
      for (std::size_t j : layer.grid.neighbor_indices(i)) {
        if (j <= i) continue;
        const double d = geodesic_distance(ci, centroid(layer.grid.tiles()[j]));
        const double w = std::exp(-(d * d) / (sigma * sigma));
        g.intra_.push_back(make_intra(off + i, off + j, w));
        g.adj_[off + i].emplace_back(off + j, w);
        g.adj_[off + j].emplace_back(off + i, w);
      }
    }
  }
  for (auto& nbrs : g.adj_) std::sort(nbrs.begin(), nbrs.end());

  // Inter-zoom edges: child -> parent, weight 1, when the parent tile exists.
  for (int z = kZoomMax; z > kZoomMin; --z) {
    const ZoomLayer& layer = table.layer(z);
    const ZoomLayer& up = table.layer(z - 1);
    const std::size_t off = g.offset_.at(z);
    const std::size_t up_off = g.offset_.at(z - 1);
    for (std::size_t i = 0; i < layer.grid.size(); ++i) {
      const auto p = up.grid.index_of(parent(layer.grid.tiles()[i]));
      if (!p) continue;
      g.inter_.push_back({off + i, up_off + *p});
      g.parent_[off + i] = up_off + *p;
    }
  }
  return g;
}

std::string HierGraph::serialize_edges() const {
  std::string out = "src_quadkey,dst_quadkey,kind,weight\n";
  for (const IntraEdge& e : intra_) {
    out += quadkey(tiles_[e.i]);
    out.push_back(',');
    out += quadkey(tiles_[e.j]);
    out += ",intra,";
    out += fmt_double(e.weight);
    out.push_back('\n');
  }
  for (const InterEdge& e : inter_) {
    out += quadkey(tiles_[e.child]);
    out.push_back(',');
    out += quadkey(tiles_[e.parent]);
    out += ",inter,1\n";
  }
  return out;
}

void HierGraph::write_edges_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << serialize_edges();
}

}  // namespace specgrid
