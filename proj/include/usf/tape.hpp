#pragma once

#include <map>
#include <string>
#include <vector>

#include "usf/rng.hpp"
#include "usf/tensor.hpp"

namespace usf::ad {

// Primitive kinds recorded on the tape. Each has an exact vector-Jacobian
// product implemented in backward().
enum class OpKind {
  Leaf,        // constant input, no gradient extracted
  Param,       // named parameter leaf
  Matmul,      // batched; rank-2 rhs is shared across batches
  Add,         // rhs broadcast over leading axes (suffix broadcast)
  Scale,       // multiply by a fixed scalar
  TransposeLast2,
  Permute,
  Reshape,
  Gelu,        // tanh approximation
  LayerNorm,   // last axis, learned affine
  Softmax,     // last axis, max-subtracted
  EmbeddingAdd,  // x[i,:] += table[idx[i],:]
  Dropout,     // inverted dropout; rate 0 is the identity
  GatherRows,
  ScatterRows,  // rows placed at idx, zeros elsewhere (add semantics)
  TileRows,
  MeanAxis,
  CrossEntropy,  // mean over batch of -log softmax(logits)[label]
  MseMasked,     // mean squared difference over the selected rows
};

const char* kind_name(OpKind k);

struct Node {
  OpKind kind = OpKind::Leaf;
  nd::Tensor value;
  nd::Tensor grad;  // allocated during backward when a gradient reaches this node
  std::vector<int> inputs;
  // Saved context (kind-dependent):
  std::vector<int> idx;      // row indices / labels / masked rows
  std::vector<double> mask;  // dropout keep-mask (scaled), empty when rate is 0
  nd::Tensor saved;          // softmax probabilities for the loss backward
  double c = 0.0;            // scale factor / dropout rate
  int axis = -1;
  std::vector<int> perm;
  std::string name;  // parameter name (Param only)
};

// Records primitive applications in topological order; backward() replays them
// in reverse exactly once, after which the tape is consumed.
class Tape {
 public:
  int input(nd::Tensor t);
  int param(const std::string& name, nd::Tensor t);

  int matmul(int a, int b);
  int add(int a, int b);
  int scale(int a, double c);
  int transpose_last2(int a);
  int permute(int a, std::vector<int> perm);
  int reshape(int a, nd::Shape s);
  int gelu(int a);
  int layer_norm(int x, int gamma, int beta, double eps = 1e-5);
  int softmax(int a);
  int embedding_add(int x, int table, std::vector<int> idx);
  int dropout(int a, double rate, Rng& rng);
  int gather_rows(int a, std::vector<int> idx);
  int scatter_rows(int a, std::vector<int> idx, int n_rows);
  int tile_rows(int a, int n);
  int mean_axis(int a, int axis);
  int sum_all(int a);  // composition: reshape -> mean -> scale
  int cross_entropy(int logits, std::vector<int> labels);
  int mse_masked(int pred, int target, std::vector<int> mask_rows);

  const nd::Tensor& value(int id) const;
  double item(int id) const;  // value of a single-element node

  // Propagates from a single-element loss node; every recorded node that
  // feeds the loss receives a gradient. Consumes the tape.
  void backward(int loss);
  bool consumed() const { return consumed_; }

  // Gradients for named parameters; parameters the loss never reached map to
  // zero tensors of the parameter shape.
  std::map<std::string, nd::Tensor> grads() const;
  nd::Tensor grad_of(int id) const;  // zeros if no gradient reached the node

  size_t size() const { return nodes_.size(); }

 private:
  int push(Node n);
  Node& at(int id);
  const Node& at(int id) const;
  void ensure_grad(Node& n);

  std::vector<Node> nodes_;
  bool consumed_ = false;
  bool ran_backward_ = false;
};

}  // namespace usf::ad
