#include "specgrid/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "specgrid/errors.hpp"

namespace specgrid {

namespace {

// Four-lane dot product. The fixed reassociation lets the compiler keep
// SIMD lanes without -ffast-math; the summation order is deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

bool DenseMatrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw DataError("matmul: inner dimensions differ");
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* orow = &out.data[i * b.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tape::Var Tape::emplace(std::size_t rows, std::size_t cols, bool needs_grad,
                        std::function<void(Tape&, Node&)> forward,
                        std::function<void(Tape&, Node&)> backprop) {
  Node n;
  n.value = DenseMatrix(rows, cols);
  n.needs_grad = needs_grad;
  n.forward = std::move(forward);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  const Var v = nodes_.size() - 1;
  nodes_[v].forward(*this, nodes_[v]);  // initial evaluation
  return v;
}

DenseMatrix& Tape::grad_buf(Var v) {
  Node& n = nodes_[v];
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols)
    n.grad = DenseMatrix(n.value.rows, n.value.cols);
  return n.grad;
}

DenseMatrix& Tape::mutable_value(Var v) {
  if (nodes_[v].forward)
    throw DataError("mutable_value: only leaves may be assigned");
  return nodes_[v].value;
}

Tape::Var Tape::input(DenseMatrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

void Tape::refresh() {
  for (Node& n : nodes_)
    if (n.forward) n.forward(*this, n);
}

void Tape::zero_grads() {
  for (Node& n : nodes_)
    for (double& g : n.grad.data) g = 0.0;
}

void Tape::backward(Var loss) {
  const DenseMatrix& v = nodes_[loss].value;
  if (v.rows != 1 || v.cols != 1)
    throw DataError("backward: loss must be a 1x1 scalar");
  grad_buf(loss).data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backprop || !n.needs_grad) continue;
    if (n.grad.size() == 0) continue;  // unused branch
    n.backprop(*this, n);
  }
}

Tape::Var Tape::matmul(Var a, Var b) {
  const DenseMatrix& va = nodes_[a].value;
  const DenseMatrix& vb = nodes_[b].value;
  if (va.cols != vb.rows) throw DataError("matmul: inner dimensions differ");
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emplace(
      va.rows, vb.cols, ng,
      [a, b](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const DenseMatrix& vb = t.nodes_[b].value;
        for (std::size_t i = 0; i < va.rows; ++i) {
          const double* arow = &va.data[i * va.cols];
          double* orow = &n.value.data[i * vb.cols];
          for (std::size_t j = 0; j < vb.cols; ++j) orow[j] = 0.0;
          for (std::size_t k = 0; k < va.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &vb.data[k * vb.cols];
            for (std::size_t j = 0; j < vb.cols; ++j) orow[j] += av * brow[j];
          }
        }
      },
      [a, b](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const DenseMatrix& vb = t.nodes_[b].value;
        const DenseMatrix& g = n.grad;
        if (t.nodes_[a].needs_grad) {  // dA = G * B^T, row-dot form
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < va.rows; ++i) {
            const double* grow = &g.data[i * vb.cols];
            double* garow = &ga.data[i * va.cols];
            for (std::size_t k = 0; k < va.cols; ++k)
              garow[k] += dot(grow, &vb.data[k * vb.cols], vb.cols);
          }
        }
        if (t.nodes_[b].needs_grad) {  // dB = A^T * G
          DenseMatrix& gb = t.grad_buf(b);
          for (std::size_t i = 0; i < va.rows; ++i) {
            const double* arow = &va.data[i * va.cols];
            const double* grow = &g.data[i * vb.cols];
            for (std::size_t k = 0; k < va.cols; ++k) {
              const double av = arow[k];
              if (av == 0.0) continue;
              double* gbrow = &gb.data[k * vb.cols];
              for (std::size_t j = 0; j < vb.cols; ++j)
                gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

namespace {

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                      const char* op) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DataError(std::string(op) + ": shape mismatch");
}

}  // namespace

Tape::Var Tape::add(Var a, Var b) {
  check_same_shape(nodes_[a].value, nodes_[b].value, "add");
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, ng,
      [a, b](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        const auto& db = t.nodes_[b].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] + db[i];
      },
      [a, b](Tape& t, Node& n) {
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga.data[i] += n.grad.data[i];
        }
        if (t.nodes_[b].needs_grad) {
          DenseMatrix& gb = t.grad_buf(b);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            gb.data[i] += n.grad.data[i];
        }
      });
}

Tape::Var Tape::sub(Var a, Var b) {
  check_same_shape(nodes_[a].value, nodes_[b].value, "sub");
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, ng,
      [a, b](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        const auto& db = t.nodes_[b].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] - db[i];
      },
      [a, b](Tape& t, Node& n) {
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga.data[i] += n.grad.data[i];
        }
        if (t.nodes_[b].needs_grad) {
          DenseMatrix& gb = t.grad_buf(b);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            gb.data[i] -= n.grad.data[i];
        }
      });
}

Tape::Var Tape::mul(Var a, Var b) {
  check_same_shape(nodes_[a].value, nodes_[b].value, "mul");
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, ng,
      [a, b](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        const auto& db = t.nodes_[b].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] * db[i];
      },
      [a, b](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        const auto& db = t.nodes_[b].value.data;
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga.data[i] += n.grad.data[i] * db[i];
        }
        if (t.nodes_[b].needs_grad) {
          DenseMatrix& gb = t.grad_buf(b);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            gb.data[i] += n.grad.data[i] * da[i];
        }
      });
}

Tape::Var Tape::scale(Var a, double c) {
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, nodes_[a].needs_grad,
      [a, c](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] * c;
      },
      [a, c](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          ga.data[i] += n.grad.data[i] * c;
      });
}

Tape::Var Tape::add_scalar(Var a, Var s) {
  const DenseMatrix& vs = nodes_[s].value;
  if (vs.rows != 1 || vs.cols != 1)
    throw DataError("add_scalar: bias must be 1x1");
  const bool ng = nodes_[a].needs_grad || nodes_[s].needs_grad;
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, ng,
      [a, s](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        const double b = t.nodes_[s].value.data[0];
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] + b;
      },
      [a, s](Tape& t, Node& n) {
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga.data[i] += n.grad.data[i];
        }
        if (t.nodes_[s].needs_grad) {
          double sum = 0.0;
          for (double g : n.grad.data) sum += g;
          t.grad_buf(s).data[0] += sum;
        }
      });
}

Tape::Var Tape::add_rowvec(Var a, Var r) {
  const DenseMatrix& va = nodes_[a].value;
  const DenseMatrix& vr = nodes_[r].value;
  if (vr.rows != 1 || vr.cols != va.cols)
    throw DataError("add_rowvec: vector must be 1xK matching columns");
  const bool ng = nodes_[a].needs_grad || nodes_[r].needs_grad;
  return emplace(
      va.rows, va.cols, ng,
      [a, r](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const auto& rv = t.nodes_[r].value.data;
        for (std::size_t i = 0; i < va.rows; ++i)
          for (std::size_t j = 0; j < va.cols; ++j)
            n.value.at(i, j) = va.at(i, j) + rv[j];
      },
      [a, r](Tape& t, Node& n) {
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga.data[i] += n.grad.data[i];
        }
        if (t.nodes_[r].needs_grad) {
          DenseMatrix& gr = t.grad_buf(r);
          for (std::size_t i = 0; i < n.grad.rows; ++i)
            for (std::size_t j = 0; j < n.grad.cols; ++j)
              gr.data[j] += n.grad.at(i, j);
        }
      });
}

Tape::Var Tape::leaky_relu(Var a, double slope) {
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, nodes_[a].needs_grad,
      [a, slope](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = da[i] >= 0.0 ? da[i] : slope * da[i];
      },
      [a, slope](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        const auto& da = t.nodes_[a].value.data;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          ga.data[i] += n.grad.data[i] * (da[i] >= 0.0 ? 1.0 : slope);
      });
}

Tape::Var Tape::tanh_op(Var a) {
  return emplace(
      nodes_[a].value.rows, nodes_[a].value.cols, nodes_[a].needs_grad,
      [a](Tape& t, Node& n) {
        const auto& da = t.nodes_[a].value.data;
        for (std::size_t i = 0; i < n.value.size(); ++i)
          n.value.data[i] = std::tanh(da[i]);
      },
      [a](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const double y = n.value.data[i];
          ga.data[i] += n.grad.data[i] * (1.0 - y * y);
        }
      });
}

Tape::Var Tape::gather_rows(Var a, std::vector<std::size_t> idx) {
  const DenseMatrix& va = nodes_[a].value;
  for (std::size_t k : idx)
    if (k >= va.rows) throw DataError("gather_rows: index out of range");
  const auto shared =
      std::make_shared<const std::vector<std::size_t>>(std::move(idx));
  return emplace(
      shared->size(), va.cols, nodes_[a].needs_grad,
      [a, shared](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const auto& idx = *shared;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const double* srow = &va.data[idx[k] * va.cols];
          double* drow = &n.value.data[k * va.cols];
          for (std::size_t j = 0; j < va.cols; ++j) drow[j] = srow[j];
        }
      },
      [a, shared](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        const auto& idx = *shared;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const double* grow = &n.grad.data[k * n.grad.cols];
          double* garow = &ga.data[idx[k] * ga.cols];
          for (std::size_t j = 0; j < n.grad.cols; ++j) garow[j] += grow[j];
        }
      });
}

Tape::Var Tape::segment_sum(Var a, std::vector<std::size_t> seg,
                            std::size_t n_segments) {
  const DenseMatrix& va = nodes_[a].value;
  if (seg.size() != va.rows) throw DataError("segment_sum: bad segment list");
  for (std::size_t s : seg)
    if (s >= n_segments) throw DataError("segment_sum: segment range");
  const auto shared =
      std::make_shared<const std::vector<std::size_t>>(std::move(seg));
  return emplace(
      n_segments, va.cols, nodes_[a].needs_grad,
      [a, shared](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const auto& seg = *shared;
        for (double& v : n.value.data) v = 0.0;
        for (std::size_t k = 0; k < seg.size(); ++k) {
          const double* srow = &va.data[k * va.cols];
          double* drow = &n.value.data[seg[k] * va.cols];
          for (std::size_t j = 0; j < va.cols; ++j) drow[j] += srow[j];
        }
      },
      [a, shared](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        const auto& seg = *shared;
        for (std::size_t k = 0; k < seg.size(); ++k) {
          const double* grow = &n.grad.data[seg[k] * n.grad.cols];
          double* garow = &ga.data[k * ga.cols];
          for (std::size_t j = 0; j < n.grad.cols; ++j) garow[j] += grow[j];
        }
      });
}

Tape::Var Tape::segment_softmax(Var logits, std::vector<std::size_t> seg,
                                std::size_t n_segments,
                                std::vector<double> log_bias) {
  const DenseMatrix& vl = nodes_[logits].value;
  if (vl.cols != 1) throw DataError("segment_softmax: logits must be Nx1");
  if (seg.size() != vl.rows || log_bias.size() != vl.rows)
    throw DataError("segment_softmax: bad segment/bias list");
  for (std::size_t s : seg)
    if (s >= n_segments) throw DataError("segment_softmax: segment range");

  struct Ctx {
    std::vector<std::size_t> seg;
    std::vector<double> bias;
    std::size_t n_segments;
    // scratch reused across refresh calls
    std::vector<double> seg_max, seg_sum;
  };
  const auto ctx = std::make_shared<Ctx>();
  ctx->seg = std::move(seg);
  ctx->bias = std::move(log_bias);
  ctx->n_segments = n_segments;
  ctx->seg_max.resize(n_segments);
  ctx->seg_sum.resize(n_segments);

  return emplace(
      vl.rows, 1, nodes_[logits].needs_grad,
      [logits, ctx](Tape& t, Node& n) {
        const auto& dl = t.nodes_[logits].value.data;
        auto& mx = ctx->seg_max;
        auto& sum = ctx->seg_sum;
        // Shift by the per-segment max for stability, then normalize.
        for (double& v : mx) v = -std::numeric_limits<double>::infinity();
        for (double& v : sum) v = 0.0;
        const auto& seg = ctx->seg;
        const auto& bias = ctx->bias;
        for (std::size_t k = 0; k < seg.size(); ++k)
          mx[seg[k]] = std::max(mx[seg[k]], dl[k] + bias[k]);
        for (std::size_t k = 0; k < seg.size(); ++k) {
          n.value.data[k] = std::exp(dl[k] + bias[k] - mx[seg[k]]);
          sum[seg[k]] += n.value.data[k];
        }
        for (std::size_t k = 0; k < seg.size(); ++k)
          n.value.data[k] /= sum[seg[k]];
      },
      [logits, ctx](Tape& t, Node& n) {
        if (!t.nodes_[logits].needs_grad) return;
        // d l_k = alpha_k * (g_k - sum_{k' in seg} g_k' alpha_k')
        auto& dot = ctx->seg_sum;  // reuse as scratch
        for (double& v : dot) v = 0.0;
        const auto& seg = ctx->seg;
        for (std::size_t k = 0; k < seg.size(); ++k)
          dot[seg[k]] += n.grad.data[k] * n.value.data[k];
        DenseMatrix& gl = t.grad_buf(logits);
        for (std::size_t k = 0; k < seg.size(); ++k)
          gl.data[k] += n.value.data[k] * (n.grad.data[k] - dot[seg[k]]);
      });
}

Tape::Var Tape::attention_aggregate(Var h, Var alpha,
                                    std::vector<std::size_t> src,
                                    std::vector<std::size_t> dst,
                                    std::size_t n_segments) {
  const DenseMatrix& vh = nodes_[h].value;
  const DenseMatrix& va = nodes_[alpha].value;
  if (va.cols != 1 || va.rows != src.size() || src.size() != dst.size())
    throw DataError("attention_aggregate: edge lists misaligned");
  for (std::size_t e = 0; e < src.size(); ++e)
    if (src[e] >= vh.rows || dst[e] >= n_segments)
      throw DataError("attention_aggregate: edge index out of range");

  struct Ctx {
    std::vector<std::size_t> src, dst;
  };
  const auto ctx = std::make_shared<Ctx>();
  ctx->src = std::move(src);
  ctx->dst = std::move(dst);
  const bool ng = nodes_[h].needs_grad || nodes_[alpha].needs_grad;
  return emplace(
      n_segments, vh.cols, ng,
      [h, alpha, ctx](Tape& t, Node& n) {
        const DenseMatrix& vh = t.nodes_[h].value;
        const auto& av = t.nodes_[alpha].value.data;
        const std::size_t cols = vh.cols;
        for (double& v : n.value.data) v = 0.0;
        for (std::size_t e = 0; e < ctx->src.size(); ++e) {
          const double a = av[e];
          const double* srow = &vh.data[ctx->src[e] * cols];
          double* drow = &n.value.data[ctx->dst[e] * cols];
          for (std::size_t j = 0; j < cols; ++j) drow[j] += a * srow[j];
        }
      },
      [h, alpha, ctx](Tape& t, Node& n) {
        const DenseMatrix& vh = t.nodes_[h].value;
        const auto& av = t.nodes_[alpha].value.data;
        const std::size_t cols = vh.cols;
        const bool gh = t.nodes_[h].needs_grad;
        const bool ga = t.nodes_[alpha].needs_grad;
        DenseMatrix* hbuf = gh ? &t.grad_buf(h) : nullptr;
        DenseMatrix* abuf = ga ? &t.grad_buf(alpha) : nullptr;
        for (std::size_t e = 0; e < ctx->src.size(); ++e) {
          const double* grow = &n.grad.data[ctx->dst[e] * cols];
          const double* srow = &vh.data[ctx->src[e] * cols];
          if (gh) {
            double* hrow = &hbuf->data[ctx->src[e] * cols];
            const double a = av[e];
            for (std::size_t j = 0; j < cols; ++j) hrow[j] += a * grow[j];
          }
          if (ga) abuf->data[e] += dot(grow, srow, cols);
        }
      });
}

Tape::Var Tape::masked_row_softmax(Var a, DenseMatrix mask) {
  const DenseMatrix& va = nodes_[a].value;
  check_same_shape(va, mask, "masked_row_softmax");
  const auto shared = std::make_shared<const DenseMatrix>(std::move(mask));
  return emplace(
      va.rows, va.cols, nodes_[a].needs_grad,
      [a, shared](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const DenseMatrix& mask = *shared;
        for (std::size_t i = 0; i < va.rows; ++i) {
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < va.cols; ++j)
            if (mask.at(i, j) != 0.0) mx = std::max(mx, va.at(i, j));
          if (!std::isfinite(mx))
            throw DataError("masked_row_softmax: fully masked row");
          double sum = 0.0;
          for (std::size_t j = 0; j < va.cols; ++j) {
            if (mask.at(i, j) != 0.0) {
              n.value.at(i, j) = std::exp(va.at(i, j) - mx);
              sum += n.value.at(i, j);
            } else {
              n.value.at(i, j) = 0.0;
            }
          }
          for (std::size_t j = 0; j < va.cols; ++j) n.value.at(i, j) /= sum;
        }
      },
      [a, shared](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        const DenseMatrix& mask = *shared;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.value.rows; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n.value.cols; ++j)
            dot += n.grad.at(i, j) * n.value.at(i, j);
          for (std::size_t j = 0; j < n.value.cols; ++j) {
            if (mask.at(i, j) == 0.0) continue;
            ga.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
          }
        }
      });
}

Tape::Var Tape::col(Var a, std::size_t j) {
  const DenseMatrix& va = nodes_[a].value;
  if (j >= va.cols) throw DataError("col: index out of range");
  return emplace(
      va.rows, 1, nodes_[a].needs_grad,
      [a, j](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        for (std::size_t i = 0; i < va.rows; ++i)
          n.value.data[i] = va.at(i, j);
      },
      [a, j](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.rows; ++i)
          ga.at(i, j) += n.grad.data[i];
      });
}

Tape::Var Tape::rows(Var a, std::size_t begin, std::size_t end) {
  const DenseMatrix& va = nodes_[a].value;
  if (begin >= end || end > va.rows) throw DataError("rows: bad range");
  return emplace(
      end - begin, va.cols, nodes_[a].needs_grad,
      [a, begin](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        for (std::size_t i = 0; i < n.value.rows; ++i)
          for (std::size_t j = 0; j < va.cols; ++j)
            n.value.at(i, j) = va.at(begin + i, j);
      },
      [a, begin](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.rows; ++i)
          for (std::size_t j = 0; j < n.grad.cols; ++j)
            ga.at(begin + i, j) += n.grad.at(i, j);
      });
}

Tape::Var Tape::mul_colvec(Var a, Var v) {
  const DenseMatrix& va = nodes_[a].value;
  const DenseMatrix& vv = nodes_[v].value;
  if (vv.cols != 1 || vv.rows != va.rows)
    throw DataError("mul_colvec: vector must be Nx1 matching rows");
  const bool ng = nodes_[a].needs_grad || nodes_[v].needs_grad;
  return emplace(
      va.rows, va.cols, ng,
      [a, v](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const auto& vv = t.nodes_[v].value.data;
        for (std::size_t i = 0; i < va.rows; ++i) {
          const double s = vv[i];
          const double* arow = &va.data[i * va.cols];
          double* orow = &n.value.data[i * va.cols];
          for (std::size_t j = 0; j < va.cols; ++j) orow[j] = arow[j] * s;
        }
      },
      [a, v](Tape& t, Node& n) {
        const DenseMatrix& va = t.nodes_[a].value;
        const auto& vv = t.nodes_[v].value.data;
        const std::size_t cols = va.cols;
        if (t.nodes_[a].needs_grad) {
          DenseMatrix& ga = t.grad_buf(a);
          for (std::size_t i = 0; i < va.rows; ++i) {
            const double s = vv[i];
            const double* grow = &n.grad.data[i * cols];
            double* garow = &ga.data[i * cols];
            for (std::size_t j = 0; j < cols; ++j) garow[j] += grow[j] * s;
          }
        }
        if (t.nodes_[v].needs_grad) {
          DenseMatrix& gv = t.grad_buf(v);
          for (std::size_t i = 0; i < va.rows; ++i)
            gv.data[i] += dot(&n.grad.data[i * cols], &va.data[i * cols],
                              cols);
        }
      });
}

Tape::Var Tape::concat_cols(std::vector<Var> cols) {
  if (cols.empty()) throw DataError("concat_cols: empty input");
  const std::size_t rows = nodes_[cols[0]].value.rows;
  bool ng = false;
  for (Var c : cols) {
    const DenseMatrix& vc = nodes_[c].value;
    if (vc.rows != rows || vc.cols != 1)
      throw DataError("concat_cols: inputs must be Nx1 with equal N");
    ng = ng || nodes_[c].needs_grad;
  }
  const auto shared =
      std::make_shared<const std::vector<Var>>(std::move(cols));
  return emplace(
      rows, shared->size(), ng,
      [shared](Tape& t, Node& n) {
        const auto& cols = *shared;
        for (std::size_t j = 0; j < cols.size(); ++j) {
          const auto& vc = t.nodes_[cols[j]].value.data;
          for (std::size_t i = 0; i < n.value.rows; ++i)
            n.value.at(i, j) = vc[i];
        }
      },
      [shared](Tape& t, Node& n) {
        const auto& cols = *shared;
        for (std::size_t j = 0; j < cols.size(); ++j) {
          if (!t.nodes_[cols[j]].needs_grad) continue;
          DenseMatrix& gc = t.grad_buf(cols[j]);
          for (std::size_t i = 0; i < n.grad.rows; ++i)
            gc.data[i] += n.grad.at(i, j);
        }
      });
}

Tape::Var Tape::sum_all(Var a) {
  return emplace(
      1, 1, nodes_[a].needs_grad,
      [a](Tape& t, Node& n) {
        double s = 0.0;
        for (double v : t.nodes_[a].value.data) s += v;
        n.value.data[0] = s;
      },
      [a](Tape& t, Node& n) {
        if (!t.nodes_[a].needs_grad) return;
        DenseMatrix& ga = t.grad_buf(a);
        const double g = n.grad.data[0];
        for (double& v : ga.data) v += g;
      });
}

}  // namespace specgrid
