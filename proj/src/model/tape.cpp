#include "munmt/model/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace munmt::ad {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("tape: ") + what);
}

}  // namespace

template <class T>
Var Tape<T>::push(Matrix<T> value, bool needs_grad) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Matrix<T>& Tape<T>::grad(Var v) {
  Node& n = node(v);
  if (n.grad_sink) {
    n.has_grad = true;
    return *n.grad_sink;
  }
  if (!n.has_grad) {
    n.grad = Matrix<T>::Zero(n.value().rows(), n.value().cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <class T>
Var Tape<T>::leaf(const Matrix<T>& value, Matrix<T>* grad_sink) {
  if (grad_sink) require(grad_sink->rows() == value.rows() && grad_sink->cols() == value.cols(), "grad sink shape");
  Node n;
  n.external = &value;
  n.grad_sink = grad_sink;
  n.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false);
}

template <class T>
const Matrix<T>& Tape<T>::value(Var v) const {
  return node(v).value();
}

template <class T>
Var Tape<T>::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul shape");
  Matrix<T> out;
  out.noalias() = value(a) * value(b);
  const bool ng = needs_grad(a) || needs_grad(b);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, a, b, o] {
      const Matrix<T>& g = node(o).grad;
      if (needs_grad(a)) grad(a).noalias() += g * value(b).transpose();
      if (needs_grad(b)) grad(b).noalias() += value(a).transpose() * g;
    };
  }
  return o;
}

template <class T>
Var Tape<T>::matmul_bt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_bt shape");
  Matrix<T> out;
  out.noalias() = value(a) * value(b).transpose();
  const bool ng = needs_grad(a) || needs_grad(b);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, a, b, o] {
      const Matrix<T>& g = node(o).grad;
      if (needs_grad(a)) grad(a).noalias() += g * value(b);
      if (needs_grad(b)) grad(b).noalias() += g.transpose() * value(a);
    };
  }
  return o;
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shape");
  const bool ng = needs_grad(a) || needs_grad(b);
  const Var o = push(value(a) + value(b), ng);
  if (ng) {
    node(o).backward = [this, a, b, o] {
      const Matrix<T>& g = node(o).grad;
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(b)) grad(b) += g;
    };
  }
  return o;
}

template <class T>
Var Tape<T>::add_row(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row shape");
  Matrix<T> out = value(a);
  out.rowwise() += value(row).row(0);
  const bool ng = needs_grad(a) || needs_grad(row);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, a, row, o] {
      const Matrix<T>& g = node(o).grad;
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(row)) grad(row) += g.colwise().sum();
    };
  }
  return o;
}

template <class T>
Var Tape<T>::scale(Var a, T factor) {
  const bool ng = needs_grad(a);
  const Var o = push(value(a) * factor, ng);
  if (ng) {
    node(o).backward = [this, a, o, factor] { grad(a) += node(o).grad * factor; };
  }
  return o;
}

template <class T>
Var Tape<T>::relu(Var a) {
  const bool ng = needs_grad(a);
  const Var o = push(value(a).cwiseMax(T(0)), ng);
  if (ng) {
    node(o).backward = [this, a, o] {
      const Matrix<T>& g = node(o).grad;
      grad(a) += (value(a).array() > T(0)).select(g, T(0));
    };
  }
  return o;
}

template <class T>
Var Tape<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const Matrix<T>& xv = value(x);
  const auto n = xv.cols();
  require(value(gamma).rows() == 1 && value(gamma).cols() == n, "layer_norm gamma shape");
  require(value(beta).rows() == 1 && value(beta).cols() == n, "layer_norm beta shape");
  auto xhat = std::make_shared<Matrix<T>>(xv.rows(), n);
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const T mean = xv.row(r).mean();
    const T var = (xv.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(r)] = inv;
    xhat->row(r) = (xv.row(r).array() - mean) * inv;
  }
  Matrix<T> out = xhat->array().rowwise() * value(gamma).row(0).array();
  out.rowwise() += value(beta).row(0);
  const bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, x, gamma, beta, o, xhat, rstd, n] {
      const Matrix<T>& g = node(o).grad;
      if (needs_grad(gamma)) grad(gamma) += (g.array() * xhat->array()).colwise().sum().matrix();
      if (needs_grad(beta)) grad(beta) += g.colwise().sum();
      if (needs_grad(x)) {
        Matrix<T>& gx = grad(x);
        const auto gam = value(gamma).row(0).array();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const Eigen::Array<T, 1, Eigen::Dynamic> gh = g.row(r).array() * gam;
          const T mean_gh = gh.sum() / T(n);
          const T mean_ghx = (gh * xhat->row(r).array()).sum() / T(n);
          gx.row(r).array() += (*rstd)[static_cast<std::size_t>(r)] * (gh - mean_gh - xhat->row(r).array() * mean_ghx);
        }
      }
    };
  }
  return o;
}

template <class T>
Var Tape<T>::gather_rows(Var table, std::vector<int> rows) {
  const Matrix<T>& tv = value(table);
  Matrix<T> out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < tv.rows(), "gather index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  const bool ng = needs_grad(table);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, table, o, rows = std::move(rows)] {
      const Matrix<T>& g = node(o).grad;
      Matrix<T>& gt = grad(table);
      for (std::size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return o;
}

template <class T>
Var Tape<T>::dropout(Var x, T rate, Rng& rng) {
  if (rate <= T(0)) return x;
  require(rate < T(1), "dropout rate must be < 1");
  const Matrix<T>& xv = value(x);
  auto mask = std::make_shared<Matrix<T>>(xv.rows(), xv.cols());
  const T keep_scale = T(1) / (T(1) - rate);
  for (Eigen::Index i = 0; i < mask->size(); ++i) {
    mask->data()[i] = rng.uniform() < static_cast<double>(rate) ? T(0) : keep_scale;
  }
  const bool ng = needs_grad(x);
  const Var o = push(xv.cwiseProduct(*mask), ng);
  if (ng) {
    node(o).backward = [this, x, o, mask] { grad(x) += node(o).grad.cwiseProduct(*mask); };
  }
  return o;
}

template <class T>
Var Tape<T>::attention(Var q, Var k, Var v, std::vector<Segment> q_segments, std::vector<Segment> k_segments,
                       int heads, bool causal) {
  const Matrix<T>& qv = value(q);
  const Matrix<T>& kv = value(k);
  const Matrix<T>& vv = value(v);
  require(qv.cols() == kv.cols() && kv.cols() == vv.cols() && kv.rows() == vv.rows(), "attention shape");
  require(heads >= 1 && qv.cols() % heads == 0, "attention heads");
  require(q_segments.size() == k_segments.size(), "attention segment count");
  const int dh = static_cast<int>(qv.cols()) / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));

  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  probs->reserve(q_segments.size() * static_cast<std::size_t>(heads));
  Matrix<T> out = Matrix<T>::Zero(qv.rows(), qv.cols());
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const Segment qs = q_segments[s];
    const Segment ks = k_segments[s];
    require(qs.length >= 1 && ks.length >= 1, "attention empty segment");
    require(!causal || qs.length == ks.length, "causal attention needs equal lengths");
    for (int h = 0; h < heads; ++h) {
      Matrix<T> scores;
      scores.noalias() = qv.block(qs.offset, h * dh, qs.length, dh) * kv.block(ks.offset, h * dh, ks.length, dh).transpose();
      scores *= inv_sqrt;
      for (int i = 0; i < qs.length; ++i) {
        const int visible = causal ? i + 1 : ks.length;
        const T m = scores.row(i).head(visible).maxCoeff();
        T total = 0;
        for (int j = 0; j < ks.length; ++j) {
          T& p = scores(i, j);
          p = j < visible ? std::exp(p - m) : T(0);
          total += p;
        }
        scores.row(i) /= total;
      }
      out.block(qs.offset, h * dh, qs.length, dh).noalias() = scores * vv.block(ks.offset, h * dh, ks.length, dh);
      probs->push_back(std::move(scores));
    }
  }
  const bool ng = needs_grad(q) || needs_grad(k) || needs_grad(v);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, q, k, v, o, probs, heads, dh, inv_sqrt, qseg = std::move(q_segments),
                        kseg = std::move(k_segments)] {
      const Matrix<T>& g = node(o).grad;
      const Matrix<T>& qv = value(q);
      const Matrix<T>& kv = value(k);
      const Matrix<T>& vv = value(v);
      Matrix<T>* gq = needs_grad(q) ? &grad(q) : nullptr;
      Matrix<T>* gk = needs_grad(k) ? &grad(k) : nullptr;
      Matrix<T>* gv = needs_grad(v) ? &grad(v) : nullptr;
      std::size_t idx = 0;
      for (std::size_t s = 0; s < qseg.size(); ++s) {
        const Segment qs = qseg[s];
        const Segment ks = kseg[s];
        for (int h = 0; h < heads; ++h, ++idx) {
          const Matrix<T>& p = (*probs)[idx];
          const auto go = g.block(qs.offset, h * dh, qs.length, dh);
          if (gv) gv->block(ks.offset, h * dh, ks.length, dh).noalias() += p.transpose() * go;
          if (!gq && !gk) continue;
          Matrix<T> dp;
          dp.noalias() = go * vv.block(ks.offset, h * dh, ks.length, dh).transpose();
          const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = (dp.array() * p.array()).rowwise().sum();
          Matrix<T> ds = p.array() * (dp.array().colwise() - rowdot.array());
          ds *= inv_sqrt;
          if (gq) gq->block(qs.offset, h * dh, qs.length, dh).noalias() += ds * kv.block(ks.offset, h * dh, ks.length, dh);
          if (gk) gk->block(ks.offset, h * dh, ks.length, dh).noalias() += ds.transpose() * qv.block(qs.offset, h * dh, qs.length, dh);
        }
      }
    };
  }
  return o;
}

template <class T>
Var Tape<T>::nll(Var logits, std::vector<int> targets, std::vector<T>* target_logprobs) {
  const Matrix<T>& lv = value(logits);
  require(static_cast<Eigen::Index>(targets.size()) == lv.rows(), "nll target count");
  auto probs = std::make_shared<Matrix<T>>(lv.rows(), lv.cols());
  if (target_logprobs) target_logprobs->assign(targets.size(), T(0));
  T total = 0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < lv.cols(), "nll target out of range");
    const T m = lv.row(r).maxCoeff();
    const T lse = m + std::log((lv.row(r).array() - m).exp().sum());
    probs->row(r) = (lv.row(r).array() - lse).exp();
    const T lp = lv(r, t) - lse;
    if (target_logprobs) (*target_logprobs)[static_cast<std::size_t>(r)] = lp;
    total -= lp;
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  const bool ng = needs_grad(logits);
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, logits, o, probs, targets = std::move(targets)] {
      const T g = node(o).grad(0, 0);
      Matrix<T>& gl = grad(logits);
      gl += *probs * g;
      for (std::size_t r = 0; r < targets.size(); ++r) gl(static_cast<Eigen::Index>(r), targets[r]) -= g;
    };
  }
  return o;
}

template <class T>
Var Tape<T>::sum(std::span<const Var> scalars) {
  Matrix<T> out = Matrix<T>::Zero(1, 1);
  bool ng = false;
  for (const Var s : scalars) {
    require(value(s).size() == 1, "sum expects scalars");
    out(0, 0) += value(s)(0, 0);
    ng = ng || needs_grad(s);
  }
  const Var o = push(std::move(out), ng);
  if (ng) {
    node(o).backward = [this, o, parts = std::vector<Var>(scalars.begin(), scalars.end())] {
      const T g = node(o).grad(0, 0);
      for (const Var s : parts) {
        if (needs_grad(s)) grad(s)(0, 0) += g;
      }
    };
  }
  return o;
}

template <class T>
void Tape<T>::backward(Var loss) {
  require(value(loss).rows() == 1 && value(loss).cols() == 1, "backward expects a scalar");
  if (!needs_grad(loss)) return;
  grad(loss)(0, 0) += T(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.needs_grad && n.backward) n.backward();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace munmt::ad
