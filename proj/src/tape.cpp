#include "usf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace usf::ad {

using nd::Shape;
using nd::Tensor;
using nd::shape_str;

const char* kind_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Param: return "param";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::TransposeLast2: return "transpose_last2";
    case OpKind::Permute: return "permute";
    case OpKind::Reshape: return "reshape";
    case OpKind::Gelu: return "gelu";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Softmax: return "softmax";
    case OpKind::EmbeddingAdd: return "embedding_add";
    case OpKind::Dropout: return "dropout";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ScatterRows: return "scatter_rows";
    case OpKind::TileRows: return "tile_rows";
    case OpKind::MeanAxis: return "mean_axis";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::MseMasked: return "mse_masked";
  }
  return "?";
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// Copies x into a tensor whose axis order is given by perm (out axis d is
// input axis perm[d]).
Tensor permute_tensor(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  Shape os(static_cast<size_t>(r));
  auto ist = row_major_strides(x.shape);
  std::vector<int64_t> step(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) {
    os[static_cast<size_t>(d)] = x.shape[static_cast<size_t>(perm[static_cast<size_t>(d)])];
    step[static_cast<size_t>(d)] = ist[static_cast<size_t>(perm[static_cast<size_t>(d)])];
  }
  Tensor out(os);
  std::vector<int> coord(static_cast<size_t>(r), 0);
  int64_t in_idx = 0;
  for (int64_t o = 0; o < out.numel(); ++o) {
    out.v[static_cast<size_t>(o)] = x.v[static_cast<size_t>(in_idx)];
    for (int d = r - 1; d >= 0; --d) {
      auto du = static_cast<size_t>(d);
      if (++coord[du] < os[du]) {
        in_idx += step[du];
        break;
      }
      coord[du] = 0;
      in_idx -= step[du] * (os[du] - 1);
    }
  }
  return out;
}

std::vector<int> transpose_perm(int rank) {
  std::vector<int> p(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) p[static_cast<size_t>(i)] = i;
  std::swap(p[static_cast<size_t>(rank - 2)], p[static_cast<size_t>(rank - 1)]);
  return p;
}

void check_row_indices(const std::vector<int>& idx, int n, const char* what) {
  for (int i : idx)
    if (i < 0 || i >= n)
      throw ValidationError(std::string(what) + ": row index " + std::to_string(i) +
                            " out of range [0," + std::to_string(n) + ")");
}

}  // namespace

Node& Tape::at(int id) {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    throw ValidationError("tape: unknown node id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

const Node& Tape::at(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    throw ValidationError("tape: unknown node id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

int Tape::push(Node n) {
  if (consumed_) throw ValidationError("tape: already consumed by backward");
  if (!n.value.all_finite())
    throw RuntimeFailure("non-finite value produced by node #" + std::to_string(nodes_.size()) +
                         " (" + kind_name(n.kind) + ")");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::value(int id) const { return at(id).value; }

double Tape::item(int id) const {
  const Node& n = at(id);
  if (n.value.numel() != 1)
    throw ValidationError("tape: item() on non-scalar node of shape " + shape_str(n.value.shape));
  return n.value.v[0];
}

int Tape::input(Tensor t) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

int Tape::param(const std::string& name, Tensor t) {
  Node n;
  n.kind = OpKind::Param;
  n.name = name;
  n.value = std::move(t);
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  Node n;
  n.kind = OpKind::Matmul;
  n.inputs = {a, b};
  n.value = nd::matmul(at(a).value, at(b).value);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& x = at(a).value;
  const Tensor& y = at(b).value;
  if (y.rank() > x.rank() ||
      !std::equal(y.shape.begin(), y.shape.end(), x.shape.end() - y.rank()))
    throw ValidationError("add: shape " + shape_str(y.shape) +
                          " is not a trailing-axes broadcast of " + shape_str(x.shape));
  Node n;
  n.kind = OpKind::Add;
  n.inputs = {a, b};
  n.value = Tensor(x.shape);
  const int64_t bn = y.numel();
  for (int64_t i = 0; i < x.numel(); ++i)
    n.value.v[static_cast<size_t>(i)] =
        x.v[static_cast<size_t>(i)] + y.v[static_cast<size_t>(i % bn)];
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  Node n;
  n.kind = OpKind::Scale;
  n.inputs = {a};
  n.c = c;
  n.value = at(a).value;
  for (double& t : n.value.v) t *= c;
  return push(std::move(n));
}

int Tape::transpose_last2(int a) {
  const Tensor& x = at(a).value;
  if (x.rank() < 2)
    throw ValidationError("transpose_last2: rank >= 2 required, got " + shape_str(x.shape));
  Node n;
  n.kind = OpKind::TransposeLast2;
  n.inputs = {a};
  n.value = permute_tensor(x, transpose_perm(x.rank()));
  return push(std::move(n));
}

int Tape::permute(int a, std::vector<int> perm) {
  const Tensor& x = at(a).value;
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  bool ok = static_cast<int>(perm.size()) == x.rank();
  for (int i = 0; ok && i < x.rank(); ++i) ok = sorted[static_cast<size_t>(i)] == i;
  if (!ok)
    throw ValidationError("permute: axis list is not a permutation of 0.." +
                          std::to_string(x.rank() - 1) + " for shape " + shape_str(x.shape));
  Node n;
  n.kind = OpKind::Permute;
  n.inputs = {a};
  n.perm = perm;
  n.value = permute_tensor(x, perm);
  return push(std::move(n));
}

int Tape::reshape(int a, Shape s) {
  const Tensor& x = at(a).value;
  if (nd::shape_numel(s) != x.numel())
    throw ValidationError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(s));
  Node n;
  n.kind = OpKind::Reshape;
  n.inputs = {a};
  n.value = Tensor(std::move(s), x.v);
  return push(std::move(n));
}

int Tape::gelu(int a) {
  static const double kC = std::sqrt(2.0 / M_PI);
  static const double kA = 0.044715;
  Node n;
  n.kind = OpKind::Gelu;
  n.inputs = {a};
  n.value = at(a).value;
  for (double& t : n.value.v) {
    const double u = kC * (t + kA * t * t * t);
    t = 0.5 * t * (1.0 + std::tanh(u));
  }
  return push(std::move(n));
}

int Tape::layer_norm(int x, int gamma, int beta, double eps) {
  const Tensor& xv = at(x).value;
  const Tensor& gv = at(gamma).value;
  const Tensor& bv = at(beta).value;
  if (xv.rank() < 1)
    throw ValidationError("layer_norm: rank >= 1 required");
  const int d = xv.shape.back();
  if (gv.shape != Shape{d} || bv.shape != Shape{d})
    throw ValidationError("layer_norm: affine shapes " + shape_str(gv.shape) + "/" +
                          shape_str(bv.shape) + " must be [" + std::to_string(d) +
                          "] for input " + shape_str(xv.shape));
  Node n;
  n.kind = OpKind::LayerNorm;
  n.inputs = {x, gamma, beta};
  n.c = eps;
  n.value = Tensor(xv.shape);
  const int64_t rows = xv.numel() / d;
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = xv.v.data() + r * d;
    double* out = n.value.v.data() + r * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += in[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
      out[j] = gv.v[static_cast<size_t>(j)] * (in[j] - mu) * inv + bv.v[static_cast<size_t>(j)];
  }
  return push(std::move(n));
}

int Tape::softmax(int a) {
  const Tensor& x = at(a).value;
  if (x.rank() < 1) throw ValidationError("softmax: rank >= 1 required");
  Node n;
  n.kind = OpKind::Softmax;
  n.inputs = {a};
  n.value = Tensor(x.shape);
  const int d = x.shape.back();
  const int64_t rows = x.numel() / d;
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = x.v.data() + r * d;
    double* out = n.value.v.data() + r * d;
    double m = in[0];
    for (int j = 1; j < d; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      out[j] = std::exp(in[j] - m);
      z += out[j];
    }
    for (int j = 0; j < d; ++j) out[j] /= z;
  }
  return push(std::move(n));
}

int Tape::embedding_add(int x, int table, std::vector<int> idx) {
  const Tensor& xv = at(x).value;
  const Tensor& tv = at(table).value;
  if (xv.rank() < 2 || tv.rank() != 2)
    throw ValidationError("embedding_add: need input rank >= 2 and table rank 2, got " +
                          shape_str(xv.shape) + " and " + shape_str(tv.shape));
  const int rows = xv.shape[0];
  const int64_t rsz = xv.numel() / rows;
  if (static_cast<int>(idx.size()) != rows || rsz != tv.shape[1])
    throw ValidationError("embedding_add: " + std::to_string(idx.size()) + " indices / table " +
                          shape_str(tv.shape) + " incompatible with input " + shape_str(xv.shape));
  check_row_indices(idx, tv.shape[0], "embedding_add");
  Node n;
  n.kind = OpKind::EmbeddingAdd;
  n.inputs = {x, table};
  n.idx = std::move(idx);
  n.value = xv;
  for (int r = 0; r < rows; ++r) {
    const double* trow = tv.v.data() + static_cast<int64_t>(n.idx[static_cast<size_t>(r)]) * rsz;
    double* out = n.value.v.data() + r * rsz;
    for (int64_t j = 0; j < rsz; ++j) out[j] += trow[j];
  }
  return push(std::move(n));
}

int Tape::dropout(int a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  Node n;
  n.kind = OpKind::Dropout;
  n.inputs = {a};
  n.c = rate;
  n.value = at(a).value;
  if (rate > 0.0) {
    const double keep = 1.0 / (1.0 - rate);
    n.mask.resize(n.value.v.size());
    for (size_t i = 0; i < n.mask.size(); ++i) {
      n.mask[i] = rng.uniform() < rate ? 0.0 : keep;
      n.value.v[i] *= n.mask[i];
    }
  }
  return push(std::move(n));
}

int Tape::gather_rows(int a, std::vector<int> idx) {
  const Tensor& x = at(a).value;
  if (x.rank() < 1 || idx.empty())
    throw ValidationError("gather_rows: need rank >= 1 and at least one index");
  check_row_indices(idx, x.shape[0], "gather_rows");
  const int64_t rsz = x.numel() / x.shape[0];
  Shape os = x.shape;
  os[0] = static_cast<int>(idx.size());
  Node n;
  n.kind = OpKind::GatherRows;
  n.inputs = {a};
  n.idx = std::move(idx);
  n.value = Tensor(os);
  for (size_t r = 0; r < n.idx.size(); ++r)
    std::copy_n(x.v.data() + static_cast<int64_t>(n.idx[r]) * rsz, rsz,
                n.value.v.data() + static_cast<int64_t>(r) * rsz);
  return push(std::move(n));
}

int Tape::scatter_rows(int a, std::vector<int> idx, int n_rows) {
  const Tensor& x = at(a).value;
  if (x.rank() < 1 || n_rows < 1)
    throw ValidationError("scatter_rows: need rank >= 1 and a positive row count");
  if (static_cast<int>(idx.size()) != x.shape[0])
    throw ValidationError("scatter_rows: " + std::to_string(idx.size()) +
                          " indices for input " + shape_str(x.shape));
  check_row_indices(idx, n_rows, "scatter_rows");
  const int64_t rsz = x.numel() / x.shape[0];
  Shape os = x.shape;
  os[0] = n_rows;
  Node n;
  n.kind = OpKind::ScatterRows;
  n.inputs = {a};
  n.idx = std::move(idx);
  n.value = Tensor(os);
  for (size_t r = 0; r < n.idx.size(); ++r) {
    const double* in = x.v.data() + static_cast<int64_t>(r) * rsz;
    double* out = n.value.v.data() + static_cast<int64_t>(n.idx[r]) * rsz;
    for (int64_t j = 0; j < rsz; ++j) out[j] += in[j];
  }
  return push(std::move(n));
}

int Tape::tile_rows(int a, int nrep) {
  const Tensor& x = at(a).value;
  if (nrep < 1) throw ValidationError("tile_rows: repetition count must be positive");
  if (x.rank() >= 2 && x.shape[0] != 1)
    throw ValidationError("tile_rows: leading extent must be 1, got " + shape_str(x.shape));
  Shape os = x.rank() == 1 ? Shape{nrep, x.shape[0]} : x.shape;
  if (x.rank() >= 2) os[0] = nrep;
  Node n;
  n.kind = OpKind::TileRows;
  n.inputs = {a};
  n.value = Tensor(os);
  const int64_t rsz = x.numel();
  for (int r = 0; r < nrep; ++r)
    std::copy_n(x.v.data(), rsz, n.value.v.data() + static_cast<int64_t>(r) * rsz);
  return push(std::move(n));
}

int Tape::mean_axis(int a, int axis) {
  const Tensor& x = at(a).value;
  if (axis < 0 || axis >= x.rank())
    throw ValidationError("mean_axis: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(x.shape));
  Shape os;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < x.rank(); ++d) {
    if (d < axis) outer *= x.shape[static_cast<size_t>(d)];
    if (d > axis) inner *= x.shape[static_cast<size_t>(d)];
    if (d != axis) os.push_back(x.shape[static_cast<size_t>(d)]);
  }
  const int ext = x.shape[static_cast<size_t>(axis)];
  Node n;
  n.kind = OpKind::MeanAxis;
  n.inputs = {a};
  n.axis = axis;
  n.value = Tensor(os);
  for (int64_t o = 0; o < outer; ++o)
    for (int e = 0; e < ext; ++e)
      for (int64_t i = 0; i < inner; ++i)
        n.value.v[static_cast<size_t>(o * inner + i)] +=
            x.v[static_cast<size_t>((o * ext + e) * inner + i)] / ext;
  return push(std::move(n));
}

int Tape::sum_all(int a) {
  const int64_t numel = at(a).value.numel();
  const int flat = reshape(a, Shape{static_cast<int>(numel)});
  return scale(mean_axis(flat, 0), static_cast<double>(numel));
}

int Tape::cross_entropy(int logits, std::vector<int> labels) {
  const Tensor& x = at(logits).value;
  if (x.rank() != 2)
    throw ValidationError("cross_entropy: logits must be rank 2, got " + shape_str(x.shape));
  const int b = x.shape[0], c = x.shape[1];
  if (static_cast<int>(labels.size()) != b)
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for batch of " + std::to_string(b));
  check_row_indices(labels, c, "cross_entropy label");
  Node n;
  n.kind = OpKind::CrossEntropy;
  n.inputs = {logits};
  n.idx = std::move(labels);
  n.saved = Tensor(x.shape);  // softmax probabilities, reused by the backward pass
  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    const double* in = x.v.data() + static_cast<int64_t>(r) * c;
    double* p = n.saved.v.data() + static_cast<int64_t>(r) * c;
    double m = in[0];
    for (int j = 1; j < c; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp(in[j] - m);
      z += p[j];
    }
    for (int j = 0; j < c; ++j) p[j] /= z;
    loss += m + std::log(z) - in[n.idx[static_cast<size_t>(r)]];
  }
  n.value = Tensor::scalar(loss / b);
  return push(std::move(n));
}

int Tape::mse_masked(int pred, int target, std::vector<int> mask_rows) {
  const Tensor& p = at(pred).value;
  const Tensor& t = at(target).value;
  if (!p.same_shape(t))
    throw ValidationError("mse_masked: prediction " + shape_str(p.shape) + " vs target " +
                          shape_str(t.shape));
  if (mask_rows.empty()) throw ValidationError("mse_masked: empty row mask");
  const int rows = p.shape[0];
  check_row_indices(mask_rows, rows, "mse_masked");
  std::set<int> uniq(mask_rows.begin(), mask_rows.end());
  if (uniq.size() != mask_rows.size())
    throw ValidationError("mse_masked: duplicate row indices in mask");
  const int64_t rsz = p.numel() / rows;
  Node n;
  n.kind = OpKind::MseMasked;
  n.inputs = {pred, target};
  n.idx = std::move(mask_rows);
  double acc = 0.0;
  for (int r : n.idx) {
    const double* pp = p.v.data() + static_cast<int64_t>(r) * rsz;
    const double* tp = t.v.data() + static_cast<int64_t>(r) * rsz;
    for (int64_t j = 0; j < rsz; ++j) acc += (pp[j] - tp[j]) * (pp[j] - tp[j]);
  }
  n.value = Tensor::scalar(acc / (static_cast<double>(n.idx.size()) * rsz));
  return push(std::move(n));
}

void Tape::ensure_grad(Node& n) {
  if (n.grad.v.empty()) n.grad = Tensor(n.value.shape);
}

void Tape::backward(int loss) {
  if (consumed_) throw ValidationError("backward: tape already consumed");
  Node& ln = at(loss);
  if (ln.value.numel() != 1)
    throw ValidationError("backward: loss must be a single value, got shape " +
                          shape_str(ln.value.shape));
  ensure_grad(ln);
  ln.grad.v[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) continue;
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::Param:
        break;
      case OpKind::Matmul: {
        Node& na = at(n.inputs[0]);
        Node& nb = at(n.inputs[1]);
        ensure_grad(na);
        ensure_grad(nb);
        const Tensor& a = na.value;
        const Tensor& b = nb.value;
        const int m = a.shape[a.rank() - 2], k = a.shape[a.rank() - 1];
        const int nn = b.shape[b.rank() - 1];
        const int64_t batches = a.numel() / (static_cast<int64_t>(m) * k);
        const bool shared_b = b.rank() == 2 && a.rank() > 2;
        for (int64_t i = 0; i < batches; ++i) {
          const double* ap = a.v.data() + i * static_cast<int64_t>(m) * k;
          const double* bp = shared_b ? b.v.data() : b.v.data() + i * static_cast<int64_t>(k) * nn;
          const double* gp = g.v.data() + i * static_cast<int64_t>(m) * nn;
          double* dap = na.grad.v.data() + i * static_cast<int64_t>(m) * k;
          double* dbp = shared_b ? nb.grad.v.data()
                                 : nb.grad.v.data() + i * static_cast<int64_t>(k) * nn;
          nd::gemm(gp, bp, dap, m, nn, k, false, true, true);   // dA += G * B^T
          nd::gemm(ap, gp, dbp, k, m, nn, true, false, true);   // dB += A^T * G
        }
        break;
      }
      case OpKind::Add: {
        Node& na = at(n.inputs[0]);
        Node& nb = at(n.inputs[1]);
        ensure_grad(na);
        ensure_grad(nb);
        const int64_t bn = nb.value.numel();
        for (int64_t i = 0; i < g.numel(); ++i) {
          na.grad.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
          nb.grad.v[static_cast<size_t>(i % bn)] += g.v[static_cast<size_t>(i)];
        }
        break;
      }
      case OpKind::Scale: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        for (int64_t i = 0; i < g.numel(); ++i)
          na.grad.v[static_cast<size_t>(i)] += n.c * g.v[static_cast<size_t>(i)];
        break;
      }
      case OpKind::TransposeLast2: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        Tensor gt = permute_tensor(g, transpose_perm(g.rank()));
        for (int64_t i = 0; i < gt.numel(); ++i)
          na.grad.v[static_cast<size_t>(i)] += gt.v[static_cast<size_t>(i)];
        break;
      }
      case OpKind::Permute: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        std::vector<int> inv(n.perm.size());
        for (size_t i = 0; i < n.perm.size(); ++i)
          inv[static_cast<size_t>(n.perm[i])] = static_cast<int>(i);
        Tensor gt = permute_tensor(g, inv);
        for (int64_t i = 0; i < gt.numel(); ++i)
          na.grad.v[static_cast<size_t>(i)] += gt.v[static_cast<size_t>(i)];
        break;
      }
      case OpKind::Reshape: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        for (int64_t i = 0; i < g.numel(); ++i)
          na.grad.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
        break;
      }
      case OpKind::Gelu: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        static const double kC = std::sqrt(2.0 / M_PI);
        static const double kA = 0.044715;
        for (int64_t i = 0; i < g.numel(); ++i) {
          const double x = na.value.v[static_cast<size_t>(i)];
          const double t = std::tanh(kC * (x + kA * x * x * x));
          const double d =
              0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
          na.grad.v[static_cast<size_t>(i)] += d * g.v[static_cast<size_t>(i)];
        }
        break;
      }
      case OpKind::LayerNorm: {
        Node& nx = at(n.inputs[0]);
        Node& ng = at(n.inputs[1]);
        Node& nb = at(n.inputs[2]);
        ensure_grad(nx);
        ensure_grad(ng);
        ensure_grad(nb);
        const int d = nx.value.shape.back();
        const int64_t rows = nx.value.numel() / d;
        std::vector<double> xhat(static_cast<size_t>(d));
        for (int64_t r = 0; r < rows; ++r) {
          const double* in = nx.value.v.data() + r * d;
          const double* go = g.v.data() + r * d;
          double* dx = nx.grad.v.data() + r * d;
          double mu = 0.0;
          for (int j = 0; j < d; ++j) mu += in[j];
          mu /= d;
          double var = 0.0;
          for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
          var /= d;
          const double inv = 1.0 / std::sqrt(var + n.c);
          double s1 = 0.0, s2 = 0.0;
          for (int j = 0; j < d; ++j) {
            xhat[static_cast<size_t>(j)] = (in[j] - mu) * inv;
            const double dxh = go[j] * ng.value.v[static_cast<size_t>(j)];
            s1 += dxh;
            s2 += dxh * xhat[static_cast<size_t>(j)];
            ng.grad.v[static_cast<size_t>(j)] += go[j] * xhat[static_cast<size_t>(j)];
            nb.grad.v[static_cast<size_t>(j)] += go[j];
          }
          for (int j = 0; j < d; ++j) {
            const double dxh = go[j] * ng.value.v[static_cast<size_t>(j)];
            dx[j] += inv * (dxh - s1 / d - xhat[static_cast<size_t>(j)] * s2 / d);
          }
        }
        break;
      }
      case OpKind::Softmax: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const int d = n.value.shape.back();
        const int64_t rows = n.value.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
          const double* s = n.value.v.data() + r * d;
          const double* go = g.v.data() + r * d;
          double* dx = na.grad.v.data() + r * d;
          double dotgs = 0.0;
          for (int j = 0; j < d; ++j) dotgs += go[j] * s[j];
          for (int j = 0; j < d; ++j) dx[j] += s[j] * (go[j] - dotgs);
        }
        break;
      }
      case OpKind::EmbeddingAdd: {
        Node& nx = at(n.inputs[0]);
        Node& nt = at(n.inputs[1]);
        ensure_grad(nx);
        ensure_grad(nt);
        const int rows = nx.value.shape[0];
        const int64_t rsz = nx.value.numel() / rows;
        for (int r = 0; r < rows; ++r) {
          const double* go = g.v.data() + r * rsz;
          double* dx = nx.grad.v.data() + r * rsz;
          double* dt = nt.grad.v.data() + static_cast<int64_t>(n.idx[static_cast<size_t>(r)]) * rsz;
          for (int64_t j = 0; j < rsz; ++j) {
            dx[j] += go[j];
            dt[j] += go[j];
          }
        }
        break;
      }
      case OpKind::Dropout: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        if (n.mask.empty()) {
          for (int64_t i = 0; i < g.numel(); ++i)
            na.grad.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
        } else {
          for (int64_t i = 0; i < g.numel(); ++i)
            na.grad.v[static_cast<size_t>(i)] +=
                n.mask[static_cast<size_t>(i)] * g.v[static_cast<size_t>(i)];
        }
        break;
      }
      case OpKind::GatherRows: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const int64_t rsz = na.value.numel() / na.value.shape[0];
        for (size_t r = 0; r < n.idx.size(); ++r) {
          const double* go = g.v.data() + static_cast<int64_t>(r) * rsz;
          double* dx = na.grad.v.data() + static_cast<int64_t>(n.idx[r]) * rsz;
          for (int64_t j = 0; j < rsz; ++j) dx[j] += go[j];
        }
        break;
      }
      case OpKind::ScatterRows: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const int64_t rsz = na.value.numel() / na.value.shape[0];
        for (size_t r = 0; r < n.idx.size(); ++r) {
          const double* go = g.v.data() + static_cast<int64_t>(n.idx[r]) * rsz;
          double* dx = na.grad.v.data() + static_cast<int64_t>(r) * rsz;
          for (int64_t j = 0; j < rsz; ++j) dx[j] += go[j];
        }
        break;
      }
      case OpKind::TileRows: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const int64_t rsz = na.value.numel();
        const int nrep = n.value.shape[0];
        for (int r = 0; r < nrep; ++r) {
          const double* go = g.v.data() + static_cast<int64_t>(r) * rsz;
          for (int64_t j = 0; j < rsz; ++j) na.grad.v[static_cast<size_t>(j)] += go[j];
        }
        break;
      }
      case OpKind::MeanAxis: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const Shape& is = na.value.shape;
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < static_cast<int>(is.size()); ++d) {
          if (d < n.axis) outer *= is[static_cast<size_t>(d)];
          if (d > n.axis) inner *= is[static_cast<size_t>(d)];
        }
        const int ext = is[static_cast<size_t>(n.axis)];
        for (int64_t o = 0; o < outer; ++o)
          for (int e = 0; e < ext; ++e)
            for (int64_t i = 0; i < inner; ++i)
              na.grad.v[static_cast<size_t>((o * ext + e) * inner + i)] +=
                  g.v[static_cast<size_t>(o * inner + i)] / ext;
        break;
      }
      case OpKind::CrossEntropy: {
        Node& na = at(n.inputs[0]);
        ensure_grad(na);
        const double gs = g.v[0];
        const int b = na.value.shape[0], c = na.value.shape[1];
        for (int r = 0; r < b; ++r)
          for (int j = 0; j < c; ++j)
            na.grad.v[static_cast<size_t>(r * c + j)] +=
                gs * (n.saved.v[static_cast<size_t>(r * c + j)] -
                      (j == n.idx[static_cast<size_t>(r)] ? 1.0 : 0.0)) /
                b;
        break;
      }
      case OpKind::MseMasked: {
        Node& np = at(n.inputs[0]);
        Node& nt = at(n.inputs[1]);
        ensure_grad(np);
        ensure_grad(nt);
        const double gs = g.v[0];
        const int rows = np.value.shape[0];
        const int64_t rsz = np.value.numel() / rows;
        const double denom = static_cast<double>(n.idx.size()) * static_cast<double>(rsz);
        for (int r : n.idx) {
          const double* pp = np.value.v.data() + static_cast<int64_t>(r) * rsz;
          const double* tp = nt.value.v.data() + static_cast<int64_t>(r) * rsz;
          double* dp = np.grad.v.data() + static_cast<int64_t>(r) * rsz;
          double* dt = nt.grad.v.data() + static_cast<int64_t>(r) * rsz;
          for (int64_t j = 0; j < rsz; ++j) {
            const double d = 2.0 * (pp[j] - tp[j]) * gs / denom;
            dp[j] += d;
            dt[j] -= d;
          }
        }
        break;
      }
    }
  }
  consumed_ = true;
  ran_backward_ = true;
}

std::map<std::string, Tensor> Tape::grads() const {
  if (!ran_backward_) throw ValidationError("grads: backward has not run");
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::Param) continue;
    Tensor g = n.grad.v.empty() ? Tensor(n.value.shape) : n.grad;
    auto it = out.find(n.name);
    if (it == out.end()) {
      out.emplace(n.name, std::move(g));
    } else {
      for (int64_t i = 0; i < g.numel(); ++i)
        it->second.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
    }
  }
  return out;
}

Tensor Tape::grad_of(int id) const {
  const Node& n = at(id);
  return n.grad.v.empty() ? Tensor(n.value.shape) : n.grad;
}

}  // namespace usf::ad
