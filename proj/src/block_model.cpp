#include "freespec/block_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "freespec/rng.hpp"

namespace freespec {
namespace {

// Block label of each coordinate; blocks are contiguous index ranges.
std::vector<int> block_of(const BlockModelSpec& spec) {
  std::vector<int> lab(spec.dim());
  int pos = 0;
  for (int k = 0; k < spec.q(); ++k)
    for (int i = 0; i < spec.block_sizes[k]; ++i) lab[pos++] = k;
  return lab;
}

RMat sym_weighted(const RMat& b, const RVec& c) {
  RVec sq = c.cwiseSqrt();
  return sq.asDiagonal() * b * sq.asDiagonal();
}

double top_eig_sym(const RMat& a, RVec* vec = nullptr) {
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) throw ConvergenceError("symmetric eigensolver failed");
  if (vec) *vec = es.eigenvectors().col(a.rows() - 1);
  return es.eigenvalues()(a.rows() - 1);
}

// Inner minimax problem shared by the null edge, the signal edge, and the
// tilted edges: the coordinate term always uses bc = B diag(c); the spectral
// term's matrix varies.  g(v) = bc (v - 1).
struct EdgeProblem {
  RMat c_first;  // matrix inside the spectral term
  RMat bc;
};

double coord_term(const EdgeProblem& p, const RVec& v, int* arg = nullptr) {
  RVec f = v.cwiseInverse() + p.bc * (v - RVec::Ones(v.size()));
  int idx;
  double val = f.maxCoeff(&idx);
  if (arg) *arg = idx;
  return val;
}

double spectral_term(const EdgeProblem& p, const RVec& v, RVec* w = nullptr) {
  RVec g = p.bc * (v - RVec::Ones(v.size()));
  RMat a = p.c_first;
  a.diagonal() += g;
  return top_eig_sym(a, w);
}

// Subgradient descent in log coordinates on either the coordinate term alone
// (null edge) or the max of both terms (signal edge).  Returns the best v.
RVec subgradient_descent(const EdgeProblem& p, const RVec& v0, bool with_spectral, int iters) {
  const int q = static_cast<int>(v0.size());
  RVec u = v0.array().log();
  RVec best_v = v0;
  double best_f = -1;
  for (int it = 0; it < iters; ++it) {
    RVec v = u.array().exp();
    int arg;
    double f2 = coord_term(p, v, &arg);
    RVec w;
    double f1 = with_spectral ? spectral_term(p, v, &w) : f2 - 1;
    double f = std::max(f1, f2);
    if (best_f < 0 || f < best_f) {
      best_f = f;
      best_v = v;
    }
    RVec grad(q);
    if (f1 > f2) {
      RVec w2 = w.cwiseAbs2();
      grad = p.bc.transpose() * w2;
    } else {
      grad = p.bc.row(arg).transpose();
      grad(arg) -= 1.0 / (v(arg) * v(arg));
    }
    grad = grad.cwiseProduct(v);  // chain rule for u = log v
    double gn = grad.norm();
    if (gn < 1e-15) break;
    u -= (0.3 / std::sqrt(1.0 + it)) * grad / gn;
  }
  return best_v;
}

struct KktSystem {
  // power = 2 for the null edge (side matrix C - diag(v)^-2), 1 for the
  // signal edge (side matrix c_first - diag(v)^-1).
  int power;
};

ReducedSolution newton_polish(const EdgeProblem& p, const KktSystem& sys, RVec v, double lam) {
  const int q = static_cast<int>(v.size());
  auto residual = [&](const RVec& vv, double ll, RVec* w) {
    RVec f(q + 1);
    f.head(q) =
        vv.cwiseInverse() + p.bc * (vv - RVec::Ones(q)) - RVec::Constant(q, ll);
    RMat side = p.c_first;
    if (sys.power == 2)
      side.diagonal() -= vv.cwiseAbs2().cwiseInverse();
    else
      side.diagonal() -= vv.cwiseInverse();
    f(q) = top_eig_sym(side, w);
    return f;
  };

  RVec w;
  RVec f = residual(v, lam, &w);
  ReducedSolution sol;
  for (int it = 0; it < 80; ++it) {
    if (f.cwiseAbs().maxCoeff() <= 1e-11) break;
    RMat jac = RMat::Zero(q + 1, q + 1);
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j < q; ++j) jac(i, j) = p.bc(i, j);
      jac(i, i) -= 1.0 / (v(i) * v(i));
      jac(i, q) = -1.0;
    }
    RVec w2 = w.cwiseAbs2();
    for (int j = 0; j < q; ++j)
      jac(q, j) = sys.power == 2 ? 2.0 * w2(j) / (v(j) * v(j) * v(j)) : w2(j) / (v(j) * v(j));
    Eigen::PartialPivLU<RMat> lu(jac);
    RVec delta = lu.solve(-f);
    if (!delta.allFinite()) break;
    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 60; ++h, alpha *= 0.5) {
      RVec v2 = v + alpha * delta.head(q);
      if (v2.minCoeff() <= 0) continue;
      double l2 = lam + alpha * delta(q);
      RVec w2v;
      RVec f2 = residual(v2, l2, &w2v);
      if (f2.norm() <= (1.0 - 1e-4 * alpha) * f.norm()) {
        v = v2;
        lam = l2;
        f = f2;
        w = w2v;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  sol.value = lam;
  sol.v_star = v;
  sol.kkt1_residual = f.head(q).cwiseAbs().maxCoeff();
  sol.kkt2_value = f(q);
  return sol;
}

ReducedSolution solve_null_edge(const EdgeProblem& p) {
  const int q = static_cast<int>(p.bc.rows());
  for (int attempt = 0; attempt < 2; ++attempt) {
    RVec v = subgradient_descent(p, RVec::Ones(q), false, attempt == 0 ? 500 : 4000);
    ReducedSolution sol = newton_polish(p, {2}, v, coord_term(p, v));
    sol.converged = sol.kkt1_residual <= 1e-7 && std::abs(sol.kkt2_value) <= 1e-6 &&
                    sol.v_star.minCoeff() > 0;
    if (sol.converged) return sol;
  }
  throw ConvergenceError("null-edge reduced principle did not converge");
}

ReducedSolution solve_signal_edge(const EdgeProblem& p, const ReducedSolution& null_sol) {
  // If the spectral side condition already holds at the null minimizer, the
  // coordinate term alone is binding and the edges coincide.
  RMat side = p.c_first;
  side.diagonal() -= null_sol.v_star.cwiseInverse();
  double slack = top_eig_sym(side);
  if (slack <= 1e-10) {
    ReducedSolution sol = null_sol;
    sol.kkt2_value = slack;
    sol.converged = true;
    return sol;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    RVec v = subgradient_descent(p, null_sol.v_star, true, attempt == 0 ? 500 : 4000);
    double lam = std::max(coord_term(p, v), spectral_term(p, v));
    ReducedSolution sol = newton_polish(p, {1}, v, lam);
    sol.converged = sol.kkt1_residual <= 1e-7 && std::abs(sol.kkt2_value) <= 1e-6 &&
                    sol.v_star.minCoeff() > 0;
    if (sol.converged) return sol;
  }
  throw ConvergenceError("signal-edge reduced principle did not converge");
}

EdgeProblem make_problem(const BlockModelSpec& spec, double tilt) {
  RVec c = spec.weights();
  RMat bt = spec.b;
  if (tilt != 0.0) bt += tilt * RMat::Ones(spec.q(), spec.q());
  return {sym_weighted(bt, c), spec.b * c.asDiagonal()};
}

void require_positive_rows(const BlockModelSpec& spec) {
  RVec rows = spec.b.rowwise().sum();
  if (rows.minCoeff() <= 0)
    throw ValidationError("reduced principles need every block row of B positive");
}

}  // namespace

int BlockModelSpec::dim() const {
  int d = 0;
  for (int s : block_sizes) d += s;
  return d;
}

RVec BlockModelSpec::weights() const {
  RVec c(q());
  for (int k = 0; k < q(); ++k) c(k) = static_cast<double>(block_sizes[k]) / dim();
  return c;
}

void BlockModelSpec::validate() const {
  if (block_sizes.empty()) throw ValidationError("block spec needs at least one block");
  for (int s : block_sizes)
    if (s <= 1) throw ValidationError("every block must have size > 1");
  const int qq = q(), d = dim();
  if (b.rows() != qq || b.cols() != qq) throw ValidationError("B must be q x q");
  if (!b.allFinite()) throw ValidationError("B must be finite");
  double bscale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if ((b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12 * bscale)
    throw ValidationError("B must be symmetric");
  if (b.minCoeff() < 0) throw ValidationError("B must be entrywise nonnegative");
  // Irreducibility: the graph on blocks with edges at positive entries must
  // be connected.  Reducible inputs are rejected, not decomposed.
  std::vector<char> seen(qq, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  while (!queue.empty()) {
    int k = queue.front();
    queue.pop_front();
    for (int l = 0; l < qq; ++l)
      if (!seen[l] && b(k, l) > 0) {
        seen[l] = 1;
        queue.push_back(l);
      }
  }
  if (std::count(seen.begin(), seen.end(), char(1)) != qq)
    throw ValidationError("B must be irreducible");
  if (z.size() != d) throw ValidationError("z must have one entry per coordinate");
  int pos = 0;
  for (int k = 0; k < qq; ++k) {
    double ss = z.segment(pos, block_sizes[k]).squaredNorm();
    if (std::abs(ss - block_sizes[k]) > 1e-9)
      throw ValidationError("z must satisfy the per-block normalization");
    pos += block_sizes[k];
  }
}

GaussianSeriesModel build_block_model(const BlockModelSpec& spec, bool include_signal) {
  spec.validate();
  const int d = spec.dim();
  std::vector<int> lab = block_of(spec);

  CMat a0 = CMat::Zero(d, d);
  RVec bc = spec.b * spec.weights();  // (1/d) profile row sums, per block
  for (int i = 0; i < d; ++i) a0(i, i) -= bc(lab[i]);
  if (include_signal)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a0(i, j) += spec.z(i) * spec.z(j) * spec.b(lab[i], lab[j]) / d;

  std::vector<Coeff> coeffs;
  coeffs.reserve(static_cast<size_t>(d) * (d + 1) / 2);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double prof = spec.b(lab[i], lab[j]);
      if (prof <= 0) continue;
      double s = std::sqrt((i == j ? 2.0 : 1.0) * prof / d);
      coeffs.push_back(Coeff::from_pairs(d, {{i, j, Complex(s, 0)}}));
    }
  return GaussianSeriesModel(std::move(a0), std::move(coeffs));
}

CMat block_sample(const BlockModelSpec& spec, bool include_signal, uint64_t seed) {
  spec.validate();
  const int d = spec.dim();
  std::vector<int> lab = block_of(spec);
  RngStream rs(seed, {});
  // Mean first, then noise, in the same arithmetic order as sampling the
  // assembled model, so the two paths agree bit for bit.
  CMat x = CMat::Zero(d, d);
  RVec bc = spec.b * spec.weights();
  for (int i = 0; i < d; ++i) x(i, i) -= bc(lab[i]);
  if (include_signal)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) x(i, j) += spec.z(i) * spec.z(j) * spec.b(lab[i], lab[j]) / d;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double prof = spec.b(lab[i], lab[j]);
      if (prof <= 0) continue;
      double g = rs.gaussian();
      Complex gs = g * Complex(std::sqrt((i == j ? 2.0 : 1.0) * prof / d), 0);
      x(i, j) += gs;
      if (j != i) x(j, i) += gs;
    }
  return x;
}

CMat algebra_embed(const BlockModelSpec& spec, const AlgebraElement& elem) {
  spec.validate();
  const int qq = spec.q(), d = spec.dim();
  if (elem.m.rows() != qq || elem.m.cols() != qq || elem.v.size() != qq)
    throw ValidationError("algebra element has wrong dimensions");
  std::vector<CVec> f(qq);
  int pos = 0;
  for (int k = 0; k < qq; ++k) {
    CVec fk = CVec::Zero(d);
    for (int i = 0; i < spec.block_sizes[k]; ++i) fk(pos + i) = spec.z(pos + i);
    fk /= std::sqrt(static_cast<double>(spec.block_sizes[k]));
    f[k] = fk;
    pos += spec.block_sizes[k];
  }
  CMat out = CMat::Zero(d, d);
  for (int k = 0; k < qq; ++k)
    for (int l = 0; l < qq; ++l) out += elem.m(k, l) * f[k] * f[l].adjoint();
  pos = 0;
  for (int k = 0; k < qq; ++k) {
    for (int i = 0; i < spec.block_sizes[k]; ++i) out(pos + i, pos + i) += elem.v(k);
    out -= elem.v(k) * f[k] * f[k].adjoint();
    pos += spec.block_sizes[k];
  }
  return out;
}

AlgebraElement mean_in_algebra(const BlockModelSpec& spec) {
  spec.validate();
  RVec c = spec.weights();
  RVec bc = spec.b * c;
  RMat m = sym_weighted(spec.b, c);
  m -= RMat(bc.asDiagonal());
  return {m.cast<Complex>(), (-bc).cast<Complex>()};
}

AlgebraElement variance_map_reduced(const BlockModelSpec& spec, const AlgebraElement& elem) {
  spec.validate();
  const int qq = spec.q();
  if (elem.m.rows() != qq || elem.m.cols() != qq || elem.v.size() != qq)
    throw ValidationError("algebra element has wrong dimensions");
  const double d = spec.dim();
  CMat bcx = spec.b.cast<Complex>();
  CVec c = spec.weights().cast<Complex>();
  CVec u = c.cwiseProduct(elem.v) + (elem.m.diagonal() - elem.v) / d;
  CVec bu = bcx * u;
  CMat mp = CMat(bu.asDiagonal());
  mp += bcx.cwiseProduct(elem.m.transpose()) / d;
  CVec vp = bu + elem.v.cwiseProduct(bcx.diagonal()) / d;
  return {std::move(mp), std::move(vp)};
}

ReducedSolution reduced_lambda0(const BlockModelSpec& spec) {
  spec.validate();
  require_positive_rows(spec);
  return solve_null_edge(make_problem(spec, 0.0));
}

ReducedSolution reduced_lambda(const BlockModelSpec& spec) {
  spec.validate();
  require_positive_rows(spec);
  EdgeProblem p = make_problem(spec, 0.0);
  return solve_signal_edge(p, solve_null_edge(p));
}

double lambda_t(const BlockModelSpec& spec, double t) {
  spec.validate();
  require_positive_rows(spec);
  EdgeProblem plain = make_problem(spec, 0.0);
  ReducedSolution null_sol = solve_null_edge(plain);
  return solve_signal_edge(make_problem(spec, t), null_sol).value;
}

std::pair<double, double> overlap_slope(const BlockModelSpec& spec, double t) {
  if (!(t > 0)) throw ValidationError("overlap_slope needs t > 0");
  double l0 = reduced_lambda(spec).value;
  double lm = lambda_t(spec, -t);
  double lp = lambda_t(spec, t);
  return {(l0 - lm) / t, (lp - l0) / t};
}

PhaseReport phase_classify(const BlockModelSpec& spec) {
  spec.validate();
  require_positive_rows(spec);
  EdgeProblem p = make_problem(spec, 0.0);
  ReducedSolution null_sol = solve_null_edge(p);
  ReducedSolution sig_sol = solve_signal_edge(p, null_sol);

  PhaseReport rep;
  rep.snr = top_eig_sym(p.c_first);
  rep.lambda = sig_sol.value;
  rep.lambda0 = null_sol.value;
  rep.error_radius = std::sqrt(8.0 * (spec.b * RVec::Ones(spec.q())).lpNorm<Eigen::Infinity>() /
                               spec.dim());

  if (std::abs(rep.snr - 1.0) <= 1e-9)
    rep.phase = 'b';
  else
    rep.phase = rep.snr < 1.0 ? 'a' : 'c';
  // Cross-check the classification against the solver outputs.
  bool ok = rep.lambda0 <= rep.lambda + 1e-8;
  if (rep.phase == 'a') ok = ok && std::abs(rep.lambda - rep.lambda0) <= 1e-6;
  if (rep.phase == 'b') ok = ok && std::abs(rep.lambda - 1.0) <= 1e-6 &&
                             std::abs(rep.lambda0 - 1.0) <= 1e-6;
  if (rep.phase == 'c') ok = ok && std::abs(rep.lambda - 1.0) <= 1e-6;
  if (!ok) throw ConvergenceError("phase classification failed its solver cross-check");

  // Perron vector of B diag(c), made primitive with a diagonal shift.
  const int qq = spec.q();
  RMat bc = p.bc + p.bc.lpNorm<Eigen::Infinity>() * RMat::Identity(qq, qq);
  RVec x = RVec::Ones(qq) / qq;
  for (int it = 0; it < 20000; ++it) {
    RVec nx = bc * x;
    nx /= nx.lpNorm<Eigen::Infinity>();
    if ((nx - x).lpNorm<Eigen::Infinity>() <= 1e-15) {
      x = nx;
      break;
    }
    x = nx;
  }
  rep.perron_b = x;
  double ratio = x.minCoeff() / x.maxCoeff();
  double root = std::sqrt(std::max(rep.snr, 0.0));
  rep.lambda0_bound = 1.0 - ratio * (1.0 - root) * (1.0 - root);
  if (rep.lambda0 > rep.lambda0_bound + 1e-8)
    throw ConvergenceError("null edge exceeded its closed-form bound");
  return rep;
}

BlockModelSpec block_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad block spec JSON: ") + e.what());
  }
  BlockModelSpec spec;
  try {
    spec.block_sizes = j.at("block_sizes").get<std::vector<int>>();
    auto rows = j.at("B").get<std::vector<std::vector<double>>>();
    const int qq = static_cast<int>(rows.size());
    spec.b = RMat::Zero(qq, qq);
    for (int k = 0; k < qq; ++k) {
      if (static_cast<int>(rows[k].size()) != qq)
        throw ValidationError("B must be square");
      for (int l = 0; l < qq; ++l) spec.b(k, l) = rows[k][l];
    }
    const int d = spec.dim();
    const auto& zj = j.at("z");
    if (zj.is_string()) {
      std::string s = zj.get<std::string>();
      if (s == "ones") {
        spec.z = RVec::Ones(d);
      } else if (s.rfind("signs:", 0) == 0) {
        uint64_t seed = std::stoull(s.substr(6));
        RngStream rs(seed, {});
        spec.z = RVec(d);
        for (int i = 0; i < d; ++i) spec.z(i) = rs.uniform() < 0.5 ? -1.0 : 1.0;
      } else {
        throw ValidationError("z must be an array, \"ones\", or \"signs:<seed>\"");
      }
    } else {
      auto zv = zj.get<std::vector<double>>();
      spec.z = Eigen::Map<const RVec>(zv.data(), static_cast<int>(zv.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad block spec JSON: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("bad seed in z: \"signs:<seed>\"");
  } catch (const std::out_of_range&) {
    throw ValidationError("bad seed in z: \"signs:<seed>\"");
  }
  spec.validate();
  return spec;
}

std::string block_spec_to_json(const BlockModelSpec& spec) {
  spec.validate();
  nlohmann::json j;
  j["block_sizes"] = spec.block_sizes;
  std::vector<std::vector<double>> rows(spec.q(), std::vector<double>(spec.q()));
  for (int k = 0; k < spec.q(); ++k)
    for (int l = 0; l < spec.q(); ++l) rows[k][l] = spec.b(k, l);
  j["B"] = rows;
  j["z"] = std::vector<double>(spec.z.data(), spec.z.data() + spec.z.size());
  return j.dump(2);
}

}  // namespace freespec
