#ifndef SPECGRID_AUTODIFF_HPP
#define SPECGRID_AUTODIFF_HPP

#include <cstddef>
#include <functional>
#include <vector>

namespace specgrid {

/// Row-major dense matrix of 64-bit floats.
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }
  bool all_finite() const;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Reverse-mode tape over DenseMatrix values. The expression graph is
/// static once built: refresh() re-evaluates every node in place (no
/// allocation), so a training loop builds the graph once and re-runs it per
/// epoch after updating leaf values. Single-threaded; evaluation order is
/// construction order, so results are bit-reproducible.
class Tape {
 public:
  using Var = std::size_t;

  /// Leaf value. Gradients are accumulated only for needs_grad leaves and
  /// whatever depends on them.
  Var input(DenseMatrix value, bool needs_grad = false);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);            // same shape
  Var sub(Var a, Var b);            // same shape
  Var mul(Var a, Var b);            // elementwise, same shape
  Var scale(Var a, double c);
  Var add_scalar(Var a, Var s);     // s is 1x1, broadcast over a
  Var add_rowvec(Var a, Var r);     // r is 1xK, broadcast over rows of a
  Var leaky_relu(Var a, double slope);
  Var tanh_op(Var a);

  /// out[k] = a[idx[k]] (rows). Backward scatter-adds.
  Var gather_rows(Var a, std::vector<std::size_t> idx);
  /// out[seg[k]] += a[k] (rows); out has n_segments rows.
  Var segment_sum(Var a, std::vector<std::size_t> seg, std::size_t n_segments);
  /// Softmax of a column vector within segments, with a constant additive
  /// bias on the logits (used for log structural edge weights).
  Var segment_softmax(Var logits, std::vector<std::size_t> seg,
                      std::size_t n_segments, std::vector<double> log_bias);
  /// Fused attention aggregation: out[dst[e]] += alpha[e] * h[src[e]] over
  /// all edges e. Equivalent to mul_colvec(gather_rows(h, src), alpha)
  /// followed by segment_sum, without materializing edge-level tensors.
  Var attention_aggregate(Var h, Var alpha, std::vector<std::size_t> src,
                          std::vector<std::size_t> dst,
                          std::size_t n_segments);
  /// Per-row softmax over the entries where mask != 0; masked entries are 0.
  Var masked_row_softmax(Var a, DenseMatrix mask);
  /// Column j of a as an Nx1 vector.
  Var col(Var a, std::size_t j);
  /// Rows [begin, end) of a.
  Var rows(Var a, std::size_t begin, std::size_t end);
  /// Rows of a scaled by the Nx1 vector v.
  Var mul_colvec(Var a, Var v);
  /// Horizontal concatenation of Nx1 columns.
  Var concat_cols(std::vector<Var> cols);
  Var sum_all(Var a);  // 1x1

  const DenseMatrix& value(Var v) const { return nodes_[v].value; }
  const DenseMatrix& grad(Var v) const { return nodes_[v].grad; }
  /// Leaf buffer for in-place updates between refresh() calls.
  DenseMatrix& mutable_value(Var v);

  /// Re-evaluates every non-leaf node in construction order.
  void refresh();
  /// Clears accumulated gradients (keeps buffers).
  void zero_grads();
  /// Reverse pass from a 1x1 scalar. Seeds d(loss)/d(loss) = 1.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;  // allocated lazily in backward
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> forward;   // empty for leaves
    std::function<void(Tape&, Node&)> backprop;  // empty for leaves
  };

  Var emplace(std::size_t rows, std::size_t cols, bool needs_grad,
              std::function<void(Tape&, Node&)> forward,
              std::function<void(Tape&, Node&)> backprop);
  DenseMatrix& grad_buf(Var v);

  std::vector<Node> nodes_;
};

}  // namespace specgrid

#endif  // SPECGRID_AUTODIFF_HPP
