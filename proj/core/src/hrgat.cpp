#include "specgrid/hrgat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

namespace specgrid {

// --- params ---------------------------------------------------------------

namespace {

DenseMatrix init_tensor(std::size_t rows, std::size_t cols, std::size_t fan_in,
                        Rng& rng) {
  DenseMatrix m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : m.data) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

HrGatParams HrGatParams::init(std::size_t n_features,
                              const HrGatConfig& config,
                              std::vector<int> zooms) {
  if (zooms.empty()) throw DataError("HrGatParams: no zooms");
  std::sort(zooms.begin(), zooms.end());
  HrGatParams p;
  p.config = config;
  p.zooms = std::move(zooms);
  const std::size_t h = config.hidden;

  Rng rng(config.seed);
  p.w_in = init_tensor(n_features, h, n_features, rng);
  for (int z : p.zooms) {
    auto& layers = p.gat[z];
    for (std::size_t l = 0; l < config.layers; ++l) {
      GatLayer layer;
      layer.w = init_tensor(h, h, h, rng);
      layer.attn = init_tensor(2 * h, 1, 2 * h, rng);
      layers.push_back(std::move(layer));
    }
  }
  if (p.zooms.size() > 1) {
    for (int z : p.zooms) p.w_fuse[z] = init_tensor(h, h, h, rng);
    p.fuse_query = init_tensor(h, 1, h, rng);
  }
  p.w_out = init_tensor(h, 1, h, rng);
  p.bias_out = DenseMatrix(1, 1, 0.0);
  return p;
}

std::vector<std::pair<std::string, DenseMatrix*>> HrGatParams::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  out.emplace_back("w_in", &w_in);
  for (int z : zooms) {
    auto& layers = gat.at(z);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base =
          "gat.z" + std::to_string(z) + ".l" + std::to_string(l);
      out.emplace_back(base + ".w", &layers[l].w);
      out.emplace_back(base + ".attn", &layers[l].attn);
    }
  }
  if (zooms.size() > 1) {
    for (int z : zooms)
      out.emplace_back("fuse.z" + std::to_string(z) + ".w", &w_fuse.at(z));
    out.emplace_back("fuse.q", &fuse_query);
  }
  out.emplace_back("w_out", &w_out);
  out.emplace_back("b_out", &bias_out);
  return out;
}

std::vector<std::pair<std::string, const DenseMatrix*>> HrGatParams::tensors()
    const {
  std::vector<std::pair<std::string, const DenseMatrix*>> out;
  for (auto& [name, ptr] : const_cast<HrGatParams*>(this)->tensors())
    out.emplace_back(name, ptr);
  return out;
}

// --- model graph ------------------------------------------------------------

const ModelGraph::ZoomSlice& ModelGraph::slice(int zoom) const {
  for (const ZoomSlice& s : slices)
    if (s.zoom == zoom) return s;
  throw DataError("ModelGraph: no slice for zoom " + std::to_string(zoom));
}

ModelGraph ModelGraph::from(const HierGraph& graph, bool hierarchical) {
  ModelGraph mg;
  mg.zooms = hierarchical ? std::vector<int>{13, 14, 15}
                          : std::vector<int>{15};

  for (int z : mg.zooms) {
    ZoomSlice s;
    s.zoom = z;
    s.n_nodes = graph.zoom_size(z);
    const std::size_t off = graph.zoom_offset(z);
    for (std::size_t i = 0; i < s.n_nodes; ++i) {
      // Self-loop first (src == dst, weight 1) so every node has a defined
      // attention neighborhood, then the grid neighbors.
      s.dst.push_back(i);
      s.src.push_back(i);
      s.log_weight.push_back(0.0);
      for (const auto& [nbr, w] : graph.neighborhood(off + i)) {
        s.dst.push_back(i);
        s.src.push_back(nbr - off);
        s.log_weight.push_back(std::log(w));
      }
    }
    mg.slices.push_back(std::move(s));
  }

  if (hierarchical) {
    const std::size_t n15 = graph.zoom_size(15);
    const std::size_t off15 = graph.zoom_offset(15);
    auto& anc14 = mg.ancestor[14];
    auto& anc13 = mg.ancestor[13];
    anc14.assign(n15, kNoAncestor);
    anc13.assign(n15, kNoAncestor);
    for (std::size_t i = 0; i < n15; ++i) {
      const auto p14 = graph.parent_node(off15 + i);
      if (!p14) continue;
      anc14[i] = *p14 - graph.zoom_offset(14);
      const auto p13 = graph.parent_node(*p14);
      if (p13) anc13[i] = *p13 - graph.zoom_offset(13);
    }
  }

  const std::size_t off15 = graph.zoom_offset(15);
  for (const HierGraph::IntraEdge& e : graph.intra_edges()) {
    if (graph.node_zoom(e.i) != 15) continue;
    mg.z15_edges.emplace_back(e.i - off15, e.j - off15);
  }
  return mg;
}

// --- forward on the tape ------------------------------------------------------

namespace {

struct TapeForward {
  Tape::Var y_hat = 0;
  Tape::Var fusion_alpha = 0;
  bool has_fusion = false;
  std::vector<int> fusion_zooms;
  std::map<std::string, Tape::Var> param_vars;
};

TapeForward build_forward(Tape& tape, const HrGatParams& params,
                          const ModelGraph& graph,
                          const std::map<int, DenseMatrix>& x,
                          bool with_grads, double y_mean, double y_sd) {
  const std::size_t h = params.config.hidden;
  const double slope = params.config.leaky_slope;
  TapeForward fw;

  const auto param_var = [&](const std::string& name, const DenseMatrix& m) {
    const Tape::Var v = tape.input(m, with_grads);
    fw.param_vars[name] = v;
    return v;
  };

  const Tape::Var w_in = param_var("w_in", params.w_in);

  std::map<int, Tape::Var> h_by_zoom;
  for (int z : graph.zooms) {
    const ModelGraph::ZoomSlice& s = graph.slice(z);
    const auto xit = x.find(z);
    if (xit == x.end())
      throw DataError("forward: missing features for zoom " +
                      std::to_string(z));
    if (xit->second.rows != s.n_nodes || xit->second.cols != params.w_in.rows)
      throw DataError("forward: feature shape mismatch at zoom " +
                      std::to_string(z));

    Tape::Var hcur = tape.matmul(tape.input(xit->second), w_in);
    const auto& layers = params.gat.at(z);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base =
          "gat.z" + std::to_string(z) + ".l" + std::to_string(l);
      const Tape::Var w = param_var(base + ".w", layers[l].w);
      const Tape::Var attn = param_var(base + ".attn", layers[l].attn);

      const Tape::Var wh = tape.matmul(hcur, w);
      const Tape::Var a_self = tape.rows(attn, 0, h);
      const Tape::Var a_neigh = tape.rows(attn, h, 2 * h);
      const Tape::Var score_self = tape.matmul(wh, a_self);
      const Tape::Var score_neigh = tape.matmul(wh, a_neigh);
      const Tape::Var logits = tape.leaky_relu(
          tape.add(tape.gather_rows(score_self, s.dst),
                   tape.gather_rows(score_neigh, s.src)),
          slope);
      // Structural Gaussian weights multiply exp(logit), i.e. shift the
      // logit by log w before the per-node softmax.
      const Tape::Var alpha =
          tape.segment_softmax(logits, s.dst, s.n_nodes, s.log_weight);
      hcur = tape.leaky_relu(
          tape.attention_aggregate(wh, alpha, s.src, s.dst, s.n_nodes),
          slope);
      if (!tape.value(hcur).all_finite())
        throw InvariantError("forward: non-finite activation at zoom " +
                             std::to_string(z) + " layer " +
                             std::to_string(l));
    }
    h_by_zoom[z] = hcur;
  }

  Tape::Var h_final;
  const std::size_t n15 = graph.slice(15).n_nodes;
  if (graph.zooms.size() == 1) {
    h_final = h_by_zoom.at(15);
  } else {
    // Node-adaptive fusion over the zooms available along the parent chain.
    std::vector<Tape::Var> aligned, gate_cols;
    DenseMatrix mask(n15, graph.zooms.size(), 1.0);
    const Tape::Var q = param_var("fuse.q", params.fuse_query);
    for (std::size_t zi = 0; zi < graph.zooms.size(); ++zi) {
      const int z = graph.zooms[zi];
      Tape::Var hz = h_by_zoom.at(z);
      if (z != 15) {
        const auto& anc = graph.ancestor.at(z);
        std::vector<std::size_t> idx(n15);
        for (std::size_t i = 0; i < n15; ++i) {
          if (anc[i] == ModelGraph::kNoAncestor) {
            idx[i] = 0;  // placeholder row; gate is masked to zero below
            mask.at(i, zi) = 0.0;
          } else {
            idx[i] = anc[i];
          }
        }
        hz = tape.gather_rows(hz, std::move(idx));
      }
      aligned.push_back(hz);
      const Tape::Var wz =
          param_var("fuse.z" + std::to_string(z) + ".w", params.w_fuse.at(z));
      gate_cols.push_back(tape.matmul(tape.tanh_op(tape.matmul(hz, wz)), q));
    }
    const Tape::Var gates = tape.concat_cols(gate_cols);
    const Tape::Var alpha = tape.masked_row_softmax(gates, std::move(mask));
    fw.fusion_alpha = alpha;
    fw.has_fusion = true;
    fw.fusion_zooms = graph.zooms;
    h_final = tape.mul_colvec(aligned[0], tape.col(alpha, 0));
    for (std::size_t zi = 1; zi < aligned.size(); ++zi)
      h_final = tape.add(
          h_final, tape.mul_colvec(aligned[zi], tape.col(alpha, zi)));
  }

  const Tape::Var w_out = param_var("w_out", params.w_out);
  const Tape::Var b_out = param_var("b_out", params.bias_out);
  Tape::Var y_hat = tape.add_scalar(tape.matmul(h_final, w_out), b_out);
  if (y_sd != 1.0) y_hat = tape.scale(y_hat, y_sd);
  if (y_mean != 0.0)
    y_hat = tape.add_scalar(y_hat, tape.input(DenseMatrix(1, 1, y_mean)));
  fw.y_hat = y_hat;
  return fw;
}

}  // namespace

Prediction forward(const HrGatParams& params, const ModelGraph& graph,
                   const std::map<int, DenseMatrix>& x) {
  Tape tape;
  const TapeForward fw = build_forward(tape, params, graph, x, false,
                                       params.y_mean, params.y_sd);
  Prediction pred;
  const DenseMatrix& yv = tape.value(fw.y_hat);
  pred.y_hat.assign(yv.data.begin(), yv.data.end());
  pred.fusion.assign(pred.y_hat.size(), {0.0, 0.0, 0.0});
  if (fw.has_fusion) {
    const DenseMatrix& av = tape.value(fw.fusion_alpha);
    for (std::size_t i = 0; i < pred.fusion.size(); ++i)
      for (std::size_t zi = 0; zi < fw.fusion_zooms.size(); ++zi)
        pred.fusion[i][static_cast<std::size_t>(fw.fusion_zooms[zi] - 13)] =
            av.at(i, zi);
  } else {
    for (auto& f : pred.fusion) f[2] = 1.0;
  }
  return pred;
}

// --- loss ----------------------------------------------------------------------

LossBreakdown eval_loss(
    const std::vector<double>& y_hat, const std::vector<double>& y,
    const std::vector<std::size_t>& mask_idx,
    const std::vector<std::pair<std::size_t, std::size_t>>& edges,
    double lambda) {
  if (lambda < 0.0) throw DataError("loss: lambda must be nonnegative");
  if (mask_idx.empty()) throw DataError("loss: empty mask");
  LossBreakdown lb;
  for (std::size_t i : mask_idx) {
    const double e = y[i] - y_hat[i];
    lb.mse += e * e;
  }
  lb.mse /= static_cast<double>(mask_idx.size());

  std::vector<char> in_mask(y_hat.size(), 0);
  for (std::size_t i : mask_idx) in_mask[i] = 1;
  std::size_t n_edges = 0;
  for (const auto& [i, j] : edges) {
    if (!in_mask[i] || !in_mask[j]) continue;
    const double d = y_hat[i] - y_hat[j];
    lb.spatial += d * d;
    ++n_edges;
  }
  if (n_edges > 0) lb.spatial /= static_cast<double>(n_edges);
  lb.total = lb.mse + lambda * lb.spatial;
  return lb;
}

namespace {

struct TapeLoss {
  Tape::Var total, mse, spatial;
  bool has_spatial = false;
};

TapeLoss build_loss(Tape& tape, Tape::Var y_hat,
                    const std::vector<double>& y,
                    const std::vector<std::size_t>& mask_idx,
                    const std::vector<std::pair<std::size_t, std::size_t>>&
                        edges,
                    double lambda) {
  if (lambda < 0.0) throw DataError("loss: lambda must be nonnegative");
  if (mask_idx.empty()) throw DataError("loss: empty mask");
  DenseMatrix y_obs(mask_idx.size(), 1);
  for (std::size_t k = 0; k < mask_idx.size(); ++k)
    y_obs.data[k] = y[mask_idx[k]];

  TapeLoss out;
  const Tape::Var err =
      tape.sub(tape.gather_rows(y_hat, mask_idx), tape.input(std::move(y_obs)));
  out.mse = tape.scale(tape.sum_all(tape.mul(err, err)),
                       1.0 / static_cast<double>(mask_idx.size()));
  out.total = out.mse;

  std::vector<char> in_mask(tape.value(y_hat).rows, 0);
  for (std::size_t i : mask_idx) in_mask[i] = 1;
  std::vector<std::size_t> ei, ej;
  for (const auto& [i, j] : edges) {
    if (!in_mask[i] || !in_mask[j]) continue;
    ei.push_back(i);
    ej.push_back(j);
  }
  if (!ei.empty() && lambda > 0.0) {
    const Tape::Var diff = tape.sub(tape.gather_rows(y_hat, std::move(ei)),
                                    tape.gather_rows(y_hat, std::move(ej)));
    out.spatial = tape.scale(tape.sum_all(tape.mul(diff, diff)),
                             1.0 / static_cast<double>(
                                       tape.value(diff).rows));
    out.has_spatial = true;
    out.total = tape.add(out.mse, tape.scale(out.spatial, lambda));
  }
  return out;
}

}  // namespace

LossAndGrads loss_and_gradients(const HrGatParams& params,
                                const ModelGraph& graph,
                                const std::map<int, DenseMatrix>& x,
                                const std::vector<double>& y,
                                const std::vector<std::size_t>& mask_idx) {
  Tape tape;
  const TapeForward fw = build_forward(tape, params, graph, x, true,
                                       params.y_mean, params.y_sd);
  const TapeLoss tl = build_loss(tape, fw.y_hat, y, mask_idx, graph.z15_edges,
                                 params.config.lambda);
  tape.backward(tl.total);

  LossAndGrads out;
  out.loss.total = tape.value(tl.total).data[0];
  out.loss.mse = tape.value(tl.mse).data[0];
  out.loss.spatial = tl.has_spatial ? tape.value(tl.spatial).data[0] : 0.0;
  for (const auto& [name, var] : fw.param_vars) {
    const DenseMatrix& g = tape.grad(var);
    if (g.size() == 0) {
      const DenseMatrix& v = tape.value(var);
      out.grads[name] = DenseMatrix(v.rows, v.cols);
    } else {
      out.grads[name] = g;
    }
  }
  return out;
}

TrainResult train(HrGatParams params, const ModelGraph& graph,
                  const std::map<int, DenseMatrix>& x,
                  const std::vector<double>& y,
                  const std::vector<std::size_t>& mask_idx) {
  if (mask_idx.empty()) throw DataError("train: empty train mask");
  if (params.config.lambda < 0.0)
    throw DataError("train: lambda must be nonnegative");

  // Standardize the target on the train mask; plain gradient descent needs
  // a unit-scale objective. forward() undoes this via y_mean / y_sd.
  double mu = 0.0;
  for (std::size_t i : mask_idx) mu += y[i];
  mu /= static_cast<double>(mask_idx.size());
  double var = 0.0;
  for (std::size_t i : mask_idx) var += (y[i] - mu) * (y[i] - mu);
  double sd = std::sqrt(var / static_cast<double>(mask_idx.size()));
  if (!(sd > 0.0)) sd = 1.0;
  std::vector<double> y_std(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) y_std[i] = (y[i] - mu) / sd;
  params.y_mean = 0.0;
  params.y_sd = 1.0;

  // Static expression graph: built once, re-evaluated in place per epoch.
  Tape tape;
  const TapeForward fw =
      build_forward(tape, params, graph, x, true, 0.0, 1.0);
  const TapeLoss tl = build_loss(tape, fw.y_hat, y_std, mask_idx,
                                 graph.z15_edges, params.config.lambda);

  TrainResult result;
  const double lr = params.config.learning_rate;
  for (std::size_t epoch = 1; epoch <= params.config.epochs; ++epoch) {
    if (epoch > 1) tape.refresh();
    const double total = tape.value(tl.total).data[0];
    if (!std::isfinite(total))
      throw InvariantError("train: diverged at epoch " +
                           std::to_string(epoch));
    result.trace.push_back(
        {epoch, total, tape.value(tl.mse).data[0],
         tl.has_spatial ? tape.value(tl.spatial).data[0] : 0.0});
    tape.zero_grads();
    tape.backward(tl.total);
    for (auto& [name, tensor] : params.tensors()) {
      const Tape::Var var = fw.param_vars.at(name);
      const DenseMatrix& g = tape.grad(var);
      if (g.size() == 0) continue;  // parameter unused by this graph
      DenseMatrix& value = tape.mutable_value(var);
      for (std::size_t i = 0; i < value.size(); ++i)
        value.data[i] -= lr * g.data[i];
      if (!value.all_finite())
        throw InvariantError("train: non-finite parameter '" + name +
                             "' at epoch " + std::to_string(epoch));
    }
  }
  for (auto& [name, tensor] : params.tensors())
    *tensor = tape.value(fw.param_vars.at(name));
  params.y_mean = mu;
  params.y_sd = sd;
  result.params = std::move(params);
  return result;
}

// --- baselines ------------------------------------------------------------------

namespace {

// Gaussian elimination with partial pivoting; a is modified in place.
std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[piv][k])) piv = i;
    if (std::fabs(a[piv][k]) < 1e-300)
      throw DataError("fit_linear: singular system beyond ridge rescue");
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> xsol(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * xsol[j];
    xsol[i] = s / a[i][i];
  }
  return xsol;
}

}  // namespace

std::vector<double> LinearModel::predict(
    const std::vector<std::vector<double>>& x) const {
  std::vector<double> out(x.size(), intercept);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < coef.size(); ++j)
      out[i] += coef[j] * x[i][j];
  return out;
}

LinearModel fit_linear(const std::vector<std::vector<double>>& x,
                       const std::vector<double>& y,
                       const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw DataError("fit_linear: empty train set");
  const std::size_t d = x.front().size();
  const std::size_t m = d + 1;  // + intercept
  std::vector<std::vector<double>> ata(m, std::vector<double>(m, 0.0));
  std::vector<double> aty(m, 0.0);
  for (std::size_t r : rows) {
    std::vector<double> row(x[r]);
    row.push_back(1.0);
    for (std::size_t i = 0; i < m; ++i) {
      aty[i] += row[i] * y[r];
      for (std::size_t j = 0; j < m; ++j) ata[i][j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) ata[i][i] += 1e-8;
  const std::vector<double> beta = solve_dense(std::move(ata), std::move(aty));
  LinearModel model;
  model.coef.assign(beta.begin(), beta.begin() + d);
  model.intercept = beta[d];
  return model;
}

std::vector<double> MlpModel::predict(const DenseMatrix& x) const {
  const auto lrelu = [&](DenseMatrix m) {
    for (double& v : m.data)
      if (v < 0.0) v *= leaky_slope;
    return m;
  };
  const auto addrow = [](DenseMatrix m, const DenseMatrix& r) {
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) += r.data[j];
    return m;
  };
  DenseMatrix h1 = lrelu(addrow(matmul(x, w1), b1));
  DenseMatrix h2 = lrelu(addrow(matmul(h1, w2), b2));
  DenseMatrix out = addrow(matmul(h2, w3), b3);
  std::vector<double> y(out.rows);
  for (std::size_t i = 0; i < out.rows; ++i)
    y[i] = out.data[i] * y_sd + y_mean;
  return y;
}

MlpModel fit_mlp(const DenseMatrix& x, const std::vector<double>& y,
                 const std::vector<std::size_t>& rows,
                 const HrGatConfig& config) {
  if (rows.empty()) throw DataError("fit_mlp: empty train set");
  const std::size_t h = config.hidden;
  Rng rng(config.seed);
  MlpModel m;
  m.leaky_slope = config.leaky_slope;
  m.w1 = init_tensor(x.cols, h, x.cols, rng);
  m.b1 = DenseMatrix(1, h, 0.0);
  m.w2 = init_tensor(h, h, h, rng);
  m.b2 = DenseMatrix(1, h, 0.0);
  m.w3 = init_tensor(h, 1, h, rng);
  m.b3 = DenseMatrix(1, 1, 0.0);

  double mu = 0.0;
  for (std::size_t i : rows) mu += y[i];
  mu /= static_cast<double>(rows.size());
  double var = 0.0;
  for (std::size_t i : rows) var += (y[i] - mu) * (y[i] - mu);
  double sd = std::sqrt(var / static_cast<double>(rows.size()));
  if (!(sd > 0.0)) sd = 1.0;

  DenseMatrix x_train(rows.size(), x.cols);
  DenseMatrix y_train(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t j = 0; j < x.cols; ++j)
      x_train.at(k, j) = x.at(rows[k], j);
    y_train.data[k] = (y[rows[k]] - mu) / sd;
  }

  std::vector<DenseMatrix*> tensors{&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
  Tape tape;
  const Tape::Var xin = tape.input(std::move(x_train));
  std::vector<Tape::Var> tv;
  for (DenseMatrix* t : tensors) tv.push_back(tape.input(*t, true));
  const Tape::Var h1 = tape.leaky_relu(
      tape.add_rowvec(tape.matmul(xin, tv[0]), tv[1]), config.leaky_slope);
  const Tape::Var h2 = tape.leaky_relu(
      tape.add_rowvec(tape.matmul(h1, tv[2]), tv[3]), config.leaky_slope);
  const Tape::Var out = tape.add_scalar(tape.matmul(h2, tv[4]), tv[5]);
  const Tape::Var err = tape.sub(out, tape.input(std::move(y_train)));
  const Tape::Var loss = tape.scale(tape.sum_all(tape.mul(err, err)),
                                    1.0 / static_cast<double>(rows.size()));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (epoch > 1) tape.refresh();
    if (!std::isfinite(tape.value(loss).data[0]))
      throw InvariantError("fit_mlp: diverged at epoch " +
                           std::to_string(epoch));
    tape.zero_grads();
    tape.backward(loss);
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const DenseMatrix& g = tape.grad(tv[t]);
      if (g.size() == 0) continue;
      DenseMatrix& value = tape.mutable_value(tv[t]);
      for (std::size_t i = 0; i < value.size(); ++i)
        value.data[i] -= config.learning_rate * g.data[i];
    }
  }
  for (std::size_t t = 0; t < tensors.size(); ++t)
    *tensors[t] = tape.value(tv[t]);
  m.y_mean = mu;
  m.y_sd = sd;
  return m;
}

// --- checkpoints ---------------------------------------------------------------

void save_checkpoint(const HrGatParams& params, const std::string& bin_path,
                     const std::string& manifest_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  std::ofstream man(manifest_path, std::ios::binary);
  if (!bin || !man)
    throw DataError("save_checkpoint: cannot write " + bin_path);
  man << "name,rows,cols,offset\n";
  std::size_t offset = 0;
  const auto dump = [&](const std::string& name, const DenseMatrix& m) {
    man << csv_line({name, std::to_string(m.rows), std::to_string(m.cols),
                     std::to_string(offset)});
    bin.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    offset += m.data.size();
  };
  for (const auto& [name, tensor] : params.tensors()) dump(name, *tensor);
  dump("y_mean", DenseMatrix(1, 1, params.y_mean));
  dump("y_sd", DenseMatrix(1, 1, params.y_sd));
}

HrGatParams load_checkpoint(const std::string& bin_path,
                            const std::string& manifest_path,
                            const HrGatConfig& config) {
  const CsvTable man = read_csv(manifest_path);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("load_checkpoint: cannot open " + bin_path);

  struct Entry {
    std::string name;
    std::size_t rows, cols, offset;
  };
  std::vector<Entry> entries;
  const std::size_t c_name = man.col("name"), c_rows = man.col("rows"),
                    c_cols = man.col("cols"), c_off = man.col("offset");
  std::set<int> zooms;
  std::size_t layers = 0, hidden = 0, d = 0;
  for (const auto& row : man.rows) {
    Entry e{row[c_name],
            static_cast<std::size_t>(parse_long(row[c_rows], "rows")),
            static_cast<std::size_t>(parse_long(row[c_cols], "cols")),
            static_cast<std::size_t>(parse_long(row[c_off], "offset"))};
    if (e.name == "w_in") {
      d = e.rows;
      hidden = e.cols;
    }
    if (e.name.rfind("gat.z", 0) == 0) {
      const std::size_t dot = e.name.find('.', 5);
      zooms.insert(std::stoi(e.name.substr(5, dot - 5)));
      const std::size_t l =
          static_cast<std::size_t>(std::stoi(e.name.substr(dot + 2)));
      layers = std::max(layers, l + 1);
    }
    entries.push_back(std::move(e));
  }
  if (d == 0 || hidden == 0 || zooms.empty())
    throw DataError("load_checkpoint: manifest lacks model structure");

  HrGatConfig cfg = config;
  cfg.hidden = hidden;
  cfg.layers = layers;
  HrGatParams params =
      HrGatParams::init(d, cfg, std::vector<int>(zooms.begin(), zooms.end()));

  std::map<std::string, DenseMatrix*> by_name;
  for (auto& [name, tensor] : params.tensors()) by_name[name] = tensor;
  DenseMatrix y_mean(1, 1), y_sd(1, 1, 1.0);
  by_name["y_mean"] = &y_mean;
  by_name["y_sd"] = &y_sd;

  for (const Entry& e : entries) {
    const auto it = by_name.find(e.name);
    if (it == by_name.end())
      throw DataError("load_checkpoint: unexpected tensor '" + e.name + "'");
    DenseMatrix& m = *it->second;
    if (m.rows != e.rows || m.cols != e.cols)
      throw DataError("load_checkpoint: shape mismatch for '" + e.name + "'");
    bin.seekg(static_cast<std::streamoff>(e.offset * sizeof(double)));
    bin.read(reinterpret_cast<char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!bin) throw DataError("load_checkpoint: truncated " + bin_path);
  }
  params.y_mean = y_mean.data[0];
  params.y_sd = y_sd.data[0];
  return params;
}

}  // namespace specgrid
