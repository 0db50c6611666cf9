#include "uvlm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "uvlm/kernels.hpp"
#include "uvlm/rng.hpp"

namespace uvlm {

namespace {

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void make_output_traced(Tensor& out) {
  out.set_requires_grad(true);
  out.mark_non_leaf();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
}

void axpy(std::vector<double>& y, const std::vector<double>& x) {
  for (size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() +
                         " and " + b.shape_str());
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  kernels::matmul(a.values().data(), b.values().data(), out.values().data(),
                  m, k, n);
  if (tracing({&a, &b})) {
    make_output_traced(out);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record(out, [ac, bc, oc, m, k, n]() mutable {
      if (ac.requires_grad()) {
        // dA += dC * B^T
        std::vector<double> tmp(m * k);
        kernels::matmul_nt(oc.grad().data(), bc.values().data(), tmp.data(),
                           m, n, k);
        axpy(ac.grad(), tmp);
      }
      if (bc.requires_grad()) {
        // dB += A^T * dC
        kernels::matmul_tn_acc(ac.values().data(), oc.grad().data(),
                               bc.grad().data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.ndim() != 2 || weight.ndim() != 2 || x.cols() != weight.cols())
    throw DimensionError("linear: input " + x.shape_str() +
                         " does not match weight " + weight.shape_str());
  const size_t t = x.rows(), di = x.cols(), dout = weight.rows();
  if (bias.size() != dout) throw DimensionError("linear: bias width mismatch");
  Tensor out({t, dout});
  kernels::matmul_nt(x.values().data(), weight.values().data(),
                     out.values().data(), t, di, dout);
  for (size_t i = 0; i < t; ++i)
    for (size_t j = 0; j < dout; ++j) out.at(i, j) += bias.at(j);
  if (tracing({&x, &weight, &bias})) {
    make_output_traced(out);
    Tensor xc = x, wc = weight, bc = bias, oc = out;
    Tape::current()->record(out, [xc, wc, bc, oc, t, di, dout]() mutable {
      if (xc.requires_grad()) {
        // dX += dY * W
        std::vector<double> tmp(t * di);
        kernels::matmul(oc.grad().data(), wc.values().data(), tmp.data(),
                        t, dout, di);
        axpy(xc.grad(), tmp);
      }
      if (wc.requires_grad()) {
        // dW += dY^T * X
        kernels::matmul_tn_acc(oc.grad().data(), xc.values().data(),
                               wc.grad().data(), dout, t, di);
      }
      if (bc.requires_grad()) {
        for (size_t i = 0; i < t; ++i)
          for (size_t j = 0; j < dout; ++j)
            bc.grad()[j] += oc.grad()[i * dout + j];
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("transpose: expected 2-D tensor");
  const size_t r = x.rows(), c = x.cols();
  Tensor out({c, r});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc, r, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j)
          xc.grad()[i * c + j] += oc.grad()[j * r + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (tracing({&a, &b})) {
    make_output_traced(out);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record(out, [ac, bc, oc]() mutable {
      if (ac.requires_grad()) axpy(ac.grad(), oc.grad());
      if (bc.requires_grad()) axpy(bc.grad(), oc.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
  if (tracing({&a, &b})) {
    make_output_traced(out);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record(out, [ac, bc, oc]() mutable {
      if (ac.requires_grad()) axpy(ac.grad(), oc.grad());
      if (bc.requires_grad())
        for (size_t i = 0; i < bc.size(); ++i) bc.grad()[i] -= oc.grad()[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (tracing({&a, &b})) {
    make_output_traced(out);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record(out, [ac, bc, oc]() mutable {
      if (ac.requires_grad())
        for (size_t i = 0; i < ac.size(); ++i)
          ac.grad()[i] += oc.grad()[i] * bc.at(i);
      if (bc.requires_grad())
        for (size_t i = 0; i < bc.size(); ++i)
          bc.grad()[i] += oc.grad()[i] * ac.at(i);
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * c;
  if (tracing({&a})) {
    make_output_traced(out);
    Tensor ac = a, oc = out;
    Tape::current()->record(out, [ac, oc, c]() mutable {
      if (!ac.requires_grad()) return;
      for (size_t i = 0; i < ac.size(); ++i) ac.grad()[i] += oc.grad()[i] * c;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols())
    throw DimensionError("add_bias: bias width " + bias.shape_str() +
                         " does not match " + x.shape_str());
  const size_t r = x.rows(), c = x.cols();
  Tensor out(x.shape());
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at(i, j) = x.at(i, j) + bias.at(j);
  if (tracing({&x, &bias})) {
    make_output_traced(out);
    Tensor xc = x, bc = bias, oc = out;
    Tape::current()->record(out, [xc, bc, oc, r, c]() mutable {
      if (xc.requires_grad()) axpy(xc.grad(), oc.grad());
      if (bc.requires_grad())
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < c; ++j) bc.grad()[j] += oc.grad()[i * c + j];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    double v = x.at(i);
    out.at(i) = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc]() mutable {
      if (!xc.requires_grad()) return;
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (size_t i = 0; i < xc.size(); ++i) {
        double v = xc.at(i);
        double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        xc.grad()[i] += oc.grad()[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const size_t r = x.rows(), c = x.cols();
  if (gamma.size() != c || beta.size() != c)
    throw DimensionError("layer_norm: affine width mismatch");
  Tensor out(x.shape());
  std::vector<double> inv_std(r), means(r);
  for (size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (size_t j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= double(c);
    double var = 0.0;
    for (size_t j = 0; j < c; ++j) {
      double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= double(c);
    means[i] = mean;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < c; ++j) {
      double norm = (x.at(i, j) - mean) * inv_std[i];
      out.at(i, j) = norm * gamma.at(j) + beta.at(j);
    }
  }
  if (tracing({&x, &gamma, &beta})) {
    make_output_traced(out);
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    Tape::current()->record(
        out, [xc, gc, bc, oc, means, inv_std, r, c]() mutable {
          for (size_t i = 0; i < r; ++i) {
            double sum_dn = 0.0, sum_dn_norm = 0.0;
            std::vector<double> norm(c), dnorm(c);
            for (size_t j = 0; j < c; ++j) {
              norm[j] = (xc.at(i, j) - means[i]) * inv_std[i];
              dnorm[j] = oc.grad()[i * c + j] * gc.at(j);
              sum_dn += dnorm[j];
              sum_dn_norm += dnorm[j] * norm[j];
            }
            if (xc.requires_grad()) {
              for (size_t j = 0; j < c; ++j) {
                xc.grad()[i * c + j] +=
                    inv_std[i] * (dnorm[j] - sum_dn / double(c) -
                                  norm[j] * sum_dn_norm / double(c));
              }
            }
            if (gc.requires_grad())
              for (size_t j = 0; j < c; ++j)
                gc.grad()[j] += oc.grad()[i * c + j] * norm[j];
            if (bc.requires_grad())
              for (size_t j = 0; j < c; ++j)
                bc.grad()[j] += oc.grad()[i * c + j];
          }
        });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw DimensionError("embedding_lookup: 2-D table");
  const size_t v = table.rows(), d = table.cols(), t = ids.size();
  if (t == 0) throw DimensionError("embedding_lookup: empty id list");
  for (int id : ids)
    if (id < 0 || size_t(id) >= v)
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " out of vocabulary " + std::to_string(v));
  Tensor out({t, d});
  for (size_t i = 0; i < t; ++i)
    std::memcpy(&out.at(i, 0), &table.values()[size_t(ids[i]) * d],
                d * sizeof(double));
  if (tracing({&table})) {
    make_output_traced(out);
    Tensor tc = table, oc = out;
    auto idc = ids;
    Tape::current()->record(out, [tc, oc, idc, d]() mutable {
      if (!tc.requires_grad()) return;
      for (size_t i = 0; i < idc.size(); ++i)
        for (size_t j = 0; j < d; ++j)
          tc.grad()[size_t(idc[i]) * d + j] += oc.grad()[i * d + j];
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw DimensionError("concat_rows: width mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  const size_t ra = a.rows(), rb = b.rows(), c = a.cols();
  Tensor out({ra + rb, c});
  std::memcpy(out.values().data(), a.values().data(),
              ra * c * sizeof(double));
  std::memcpy(out.values().data() + ra * c, b.values().data(),
              rb * c * sizeof(double));
  if (tracing({&a, &b})) {
    make_output_traced(out);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record(out, [ac, bc, oc, ra, rb, c]() mutable {
      if (ac.requires_grad())
        for (size_t i = 0; i < ra * c; ++i) ac.grad()[i] += oc.grad()[i];
      if (bc.requires_grad())
        for (size_t i = 0; i < rb * c; ++i)
          bc.grad()[i] += oc.grad()[ra * c + i];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const size_t r = parts[0].rows();
  size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row mismatch");
    total += p.cols();
  }
  Tensor out({r, total});
  size_t off = 0;
  for (const Tensor& p : parts) {
    for (size_t i = 0; i < r; ++i)
      std::memcpy(&out.at(i, off), p.values().data() + i * p.cols(),
                  p.cols() * sizeof(double));
    off += p.cols();
  }
  bool traced = false;
  for (const Tensor& p : parts)
    if (Tape::current() && p.requires_grad()) traced = true;
  if (traced) {
    make_output_traced(out);
    auto pc = parts;
    Tensor oc = out;
    Tape::current()->record(out, [pc, oc, r, total]() mutable {
      size_t off = 0;
      for (Tensor& p : pc) {
        if (p.requires_grad()) {
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < p.cols(); ++j)
              p.grad()[i * p.cols() + j] += oc.grad()[i * total + off + j];
        }
        off += p.cols();
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, size_t start, size_t len) {
  if (start + len > x.cols())
    throw DimensionError("slice_cols: range out of bounds for " +
                         x.shape_str());
  const size_t r = x.rows(), c = x.cols();
  Tensor out({r, len});
  for (size_t i = 0; i < r; ++i)
    std::memcpy(&out.at(i, 0), x.values().data() + i * x.cols() + start,
                len * sizeof(double));
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc, start, len, r, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < len; ++j)
          xc.grad()[i * c + start + j] += oc.grad()[i * len + j];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<size_t>& indices) {
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  const size_t c = x.cols();
  for (size_t idx : indices)
    if (idx >= x.rows())
      throw IndexError("gather_rows: row " + std::to_string(idx) +
                       " out of range for " + x.shape_str());
  Tensor out({indices.size(), c});
  for (size_t i = 0; i < indices.size(); ++i)
    std::memcpy(&out.at(i, 0), x.values().data() + indices[i] * c,
                c * sizeof(double));
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    auto idc = indices;
    Tape::current()->record(out, [xc, oc, idc, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < idc.size(); ++i)
        for (size_t j = 0; j < c; ++j)
          xc.grad()[idc[i] * c + j] += oc.grad()[i * c + j];
    });
  }
  return out;
}

Tensor gather_elems(const Tensor& x,
                    const std::vector<std::pair<size_t, size_t>>& coords) {
  if (coords.empty()) throw DimensionError("gather_elems: empty coord list");
  const size_t c = x.cols();
  Tensor out({coords.size()});
  for (size_t i = 0; i < coords.size(); ++i) {
    auto [r, col] = coords[i];
    if (r >= x.rows() || col >= c)
      throw IndexError("gather_elems: coordinate out of range");
    out.at(i) = x.at(r, col);
  }
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    auto cc = coords;
    Tape::current()->record(out, [xc, oc, cc, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < cc.size(); ++i)
        xc.grad()[cc[i].first * c + cc[i].second] += oc.grad()[i];
    });
  }
  return out;
}

Tensor scatter_rows(const Tensor& x, const std::vector<size_t>& indices,
                    size_t total_rows) {
  if (indices.size() != x.rows())
    throw DimensionError("scatter_rows: one index per row required");
  const size_t c = x.cols();
  for (size_t idx : indices)
    if (idx >= total_rows)
      throw IndexError("scatter_rows: row index out of range");
  Tensor out({total_rows, c});
  for (size_t i = 0; i < indices.size(); ++i)
    std::memcpy(&out.at(indices[i], 0), x.values().data() + i * c,
                c * sizeof(double));
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    auto idc = indices;
    Tape::current()->record(out, [xc, oc, idc, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < idc.size(); ++i)
        for (size_t j = 0; j < c; ++j)
          xc.grad()[i * c + j] += oc.grad()[idc[i] * c + j];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  const size_t c = x.cols();
  if (c == 0 || x.size() == 0)
    throw DimensionError("softmax: empty last dimension");
  const size_t r = x.size() / c;
  Tensor out(x.shape());
  for (size_t i = 0; i < r; ++i) {
    double mx = x.at(i * c);
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i * c + j));
    double denom = 0.0;
    for (size_t j = 0; j < c; ++j) {
      double e = std::exp(x.at(i * c + j) - mx);
      out.at(i * c + j) = e;
      denom += e;
    }
    for (size_t j = 0; j < c; ++j) out.at(i * c + j) /= denom;
  }
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc, r, c]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < c; ++j)
          dot += oc.grad()[i * c + j] * oc.at(i * c + j);
        for (size_t j = 0; j < c; ++j)
          xc.grad()[i * c + j] +=
              oc.at(i * c + j) * (oc.grad()[i * c + j] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.ndim() != 2)
    throw DimensionError("cross_entropy: expected T x V logits");
  const size_t t = logits.rows(), v = logits.cols();
  if (targets.size() != t)
    throw DimensionError("cross_entropy: target count " +
                         std::to_string(targets.size()) + " vs T=" +
                         std::to_string(t));
  if (t == 0) throw DimensionError("cross_entropy: empty sequence");
  for (int id : targets)
    if (id < 0 || size_t(id) >= v)
      throw IndexError("cross_entropy: target " + std::to_string(id) +
                       " out of vocabulary " + std::to_string(v));
  // softmax probabilities kept for the backward pass
  std::vector<double> probs(t * v);
  double loss = 0.0;
  for (size_t i = 0; i < t; ++i) {
    double mx = logits.at(i, 0);
    for (size_t j = 1; j < v; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (size_t j = 0; j < v; ++j) {
      double e = std::exp(logits.at(i, j) - mx);
      probs[i * v + j] = e;
      denom += e;
    }
    double log_denom = std::log(denom);
    for (size_t j = 0; j < v; ++j) probs[i * v + j] /= denom;
    loss -= (logits.at(i, size_t(targets[i])) - mx - log_denom);
  }
  Tensor out = Tensor::scalar(loss / double(t));
  if (tracing({&logits})) {
    make_output_traced(out);
    Tensor lc = logits, oc = out;
    auto tc = targets;
    Tape::current()->record(out, [lc, oc, tc, probs, t, v]() mutable {
      if (!lc.requires_grad()) return;
      double g = oc.grad()[0] / double(t);
      for (size_t i = 0; i < t; ++i) {
        for (size_t j = 0; j < v; ++j)
          lc.grad()[i * v + j] += g * probs[i * v + j];
        lc.grad()[i * v + size_t(tc[i])] -= g;
      }
    });
  }
  return out;
}

Tensor log_sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    double v = x.at(i);
    // log sigmoid(v) = -log(1 + exp(-v)) = min(v,0) - log1p(exp(-|v|))
    out.at(i) = std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v)));
  }
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < xc.size(); ++i) {
        double v = xc.at(i);
        double sig = 1.0 / (1.0 + std::exp(std::abs(v)));
        // d/dv log sigmoid(v) = 1 - sigmoid(v) = sigmoid(-v)
        double d = v >= 0 ? sig : 1.0 - sig;
        xc.grad()[i] += oc.grad()[i] * d;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.at(i);
  Tensor out = Tensor::scalar(s);
  if (tracing({&x})) {
    make_output_traced(out);
    Tensor xc = x, oc = out;
    Tape::current()->record(out, [xc, oc]() mutable {
      if (!xc.requires_grad()) return;
      for (size_t i = 0; i < xc.size(); ++i) xc.grad()[i] += oc.grad()[0];
    });
  }
  return out;
}

Tensor ste_gate(const Tensor& delta, const Tensor& gates) {
  if (gates.size() != delta.rows())
    throw DimensionError("ste_gate: one gate per row required");
  Tensor out = delta.clone();
  if (tracing({&delta, &gates})) {
    make_output_traced(out);
    Tensor dc = delta, gc = gates, oc = out;
    std::vector<double> g0 = gates.values();  // detached forward values
    const size_t r = delta.rows(), c = delta.cols();
    Tape::current()->record(out, [dc, gc, oc, g0, r, c]() mutable {
      if (dc.requires_grad()) axpy(dc.grad(), oc.grad());
      if (gc.requires_grad()) {
        for (size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (size_t j = 0; j < c; ++j)
            dot += oc.grad()[i * c + j] * dc.at(i, j);
          gc.grad()[i] += dot / (g0[i] + 1e-12);
        }
      }
    });
  }
  return out;
}

double finite_diff_check(const std::function<Tensor()>& f, Tensor x,
                         double step, size_t max_coords, uint64_t seed) {
  if (step <= 0.0) throw ContractError("finite_diff_check: step must be > 0");
  bool was_trainable = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<double> analytic = x.grad();
  x.zero_grad();

  std::vector<size_t> coords(x.size());
  for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    for (size_t i = 0; i < max_coords; ++i) {
      size_t j = i + size_t(rng.below(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(max_coords);
  }

  double max_rel = 0.0;
  for (size_t i : coords) {
    double orig = x.at(i);
    x.at(i) = orig + step;
    double fp = f().item();
    x.at(i) = orig - step;
    double fm = f().item();
    x.at(i) = orig;
    double central = (fp - fm) / (2.0 * step);
    // absolute floor so central-difference roundoff on near-zero
    // components does not dominate the relative error
    double rel = std::abs(analytic[i] - central) /
                 (std::abs(analytic[i]) + std::abs(central) + 1e-6);
    max_rel = std::max(max_rel, rel);
  }
  if (!was_trainable) x.set_requires_grad(false);
  return max_rel;
}

}  // namespace uvlm
