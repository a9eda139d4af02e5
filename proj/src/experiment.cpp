#include "freespec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "freespec/applications.hpp"
#include "freespec/block_model.hpp"
#include "freespec/free_solver.hpp"
#include "freespec/iso.hpp"
#include "freespec/model.hpp"
#include "freespec/rng.hpp"
#include "freespec/types.hpp"

namespace freespec {

namespace {

using nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string>& known_kinds() {
  static const std::vector<std::string> kinds = {
      "spiked-band", "bbp-sweep", "block-phase", "kikuchi",
      "decode",      "csbm",      "scov",        "scov-error"};
  return kinds;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& kinds = known_kinds();
  if (std::find(kinds.begin(), kinds.end(), cfg.kind) == kinds.end())
    throw ValidationError("experiment: unknown kind '" + cfg.kind + "'");
  if (cfg.grid.empty()) throw ValidationError("experiment: grid must be nonempty");
  if (cfg.trials < 1) throw ValidationError("experiment: trials must be >= 1");

  auto need_nonneg_grid = [&](const char* what) {
    for (double g : cfg.grid)
      if (!(g >= 0) || !std::isfinite(g))
        throw ValidationError(std::string("experiment: ") + what +
                              " grid values must be finite and nonnegative");
  };

  if (cfg.kind == "spiked-band") {
    if (cfg.dim < 2) throw ValidationError("experiment: spiked-band needs dim >= 2");
    if (cfg.width < 3 || cfg.width % 2 == 0 || cfg.width >= cfg.dim)
      throw ValidationError("experiment: band width must be odd, >= 3, and < dim");
    need_nonneg_grid("theta");
  } else if (cfg.kind == "bbp-sweep") {
    if (cfg.dim < 2) throw ValidationError("experiment: bbp-sweep needs dim >= 2");
    need_nonneg_grid("theta");
  } else if (cfg.kind == "block-phase") {
    if (cfg.b.rows() == 0 || cfg.b.rows() != cfg.b.cols())
      throw ValidationError("experiment: block-phase needs a square profile b");
    if (static_cast<int>(cfg.block_sizes.size()) != cfg.b.rows())
      throw ValidationError("experiment: block_sizes must match the profile size");
    for (double g : cfg.grid)
      if (!(g > 0) || !std::isfinite(g))
        throw ValidationError("experiment: block-phase scale grid must be positive");
    BlockModelSpec spec;
    spec.block_sizes = cfg.block_sizes;
    spec.b = cfg.grid.front() * cfg.b;
    spec.z = RVec::Ones(spec.dim());
    spec.validate();
  } else if (cfg.kind == "kikuchi") {
    kikuchi_params(cfg.dim, cfg.p_dim, cfg.ell);  // rejects bad (n, p, ell)
    if (binomial(cfg.dim, cfg.ell) > 200000.0)
      throw ValidationError("experiment: kikuchi dimension exceeds the memory cap");
    need_nonneg_grid("signal");
  } else if (cfg.kind == "decode") {
    if (cfg.dim < 2) throw ValidationError("experiment: decode needs dim >= 2");
    if (cfg.width < 1 || cfg.width >= cfg.dim)
      throw ValidationError("experiment: decode degree must be in [1, dim)");
    if ((static_cast<long long>(cfg.dim) * cfg.width) % 2 != 0)
      throw ValidationError("experiment: decode needs dim * degree even");
    need_nonneg_grid("theta");
  } else if (cfg.kind == "csbm") {
    if (cfg.dim < 2 || cfg.p_dim < 1)
      throw ValidationError("experiment: csbm needs dim >= 2 and p >= 1");
    need_nonneg_grid("kappa");
  } else {  // scov, scov-error
    if (cfg.dim < 1 || cfg.p_dim < 1)
      throw ValidationError("experiment: covariance kinds need dim >= 1 and p >= 1");
    need_nonneg_grid("lambda");
  }

  if (cfg.hausdorff) {
    if (cfg.kind != "spiked-band" && cfg.kind != "bbp-sweep")
      throw ValidationError("experiment: hausdorff recording applies to spiked-band/bbp-sweep");
    if (cfg.dim > 200)
      throw ValidationError("experiment: hausdorff recording is limited to dim <= 200");
  }
}

// ---- config (de)serialization ----

RMat json_to_rmat(const json& rows, const char* who) {
  if (!rows.is_array() || rows.empty())
    throw ValidationError(std::string(who) + ": expected a nonempty array of rows");
  const int q = static_cast<int>(rows.size());
  RMat b(q, q);
  for (int i = 0; i < q; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != q)
      throw ValidationError(std::string(who) + ": rows must all have the matrix size");
    for (int j = 0; j < q; ++j) b(i, j) = row[j].get<double>();
  }
  return b;
}

ExperimentConfig config_from_parsed(const json& j) {
  static const std::vector<std::string> keys = {
      "kind",  "grid", "trials", "master_seed", "output",     "threads",   "dim",
      "width", "p",    "ell",    "b",           "block_sizes", "rademacher", "hausdorff"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ValidationError("experiment config: unknown key '" + it.key() + "'");

  ExperimentConfig cfg;
  if (!j.contains("kind") || !j["kind"].is_string())
    throw ValidationError("experiment config: 'kind' (string) is required");
  cfg.kind = j["kind"].get<std::string>();
  if (!j.contains("grid") || !j["grid"].is_array())
    throw ValidationError("experiment config: 'grid' (array) is required");
  for (const auto& g : j["grid"]) cfg.grid.push_back(g.get<double>());
  cfg.trials = j.value("trials", 1);
  cfg.master_seed = j.value("master_seed", static_cast<uint64_t>(0));
  cfg.output = j.value("output", std::string("experiment"));
  cfg.threads = j.value("threads", 0);
  cfg.dim = j.value("dim", 0);
  cfg.width = j.value("width", 51);
  cfg.p_dim = j.value("p", 0);
  cfg.ell = j.value("ell", 0);
  if (j.contains("b")) cfg.b = json_to_rmat(j["b"], "experiment config b");
  if (j.contains("block_sizes"))
    for (const auto& s : j["block_sizes"]) cfg.block_sizes.push_back(s.get<int>());
  cfg.rademacher = j.value("rademacher", true);
  cfg.hausdorff = j.value("hausdorff", false);
  validate_config(cfg);
  return cfg;
}

// ---- per-trial statistics ----

struct TrialStats {
  double lambda_max = kNan;
  double lambda_2 = kNan;
  double overlap = kNan;
  double hausdorff = kNan;
};

struct TheoryPoint {
  double value = kNan;
  double error_radius = kNan;
  double overlap_theory = kNan;
};

RVec sign_vector(RngStream& rs, int d) {
  RVec x(d);
  for (int i = 0; i < d; ++i) x(i) = rs.uniform() < 0.5 ? -1.0 : 1.0;
  return x;
}

uint64_t sub_seed(uint64_t seed, uint64_t slot) { return RngStream(seed, {slot}).key()[0]; }

void top_two_real(const RMat& x, const RVec& dir, TrialStats& st) {
  Eigen::SelfAdjointEigenSolver<RMat> es(x);
  const int d = static_cast<int>(x.rows());
  st.lambda_max = es.eigenvalues()(d - 1);
  st.lambda_2 = d > 1 ? es.eigenvalues()(d - 2) : st.lambda_max;
  if (dir.size() == d) {
    const double ip = dir.dot(es.eigenvectors().col(d - 1));
    st.overlap = ip * ip;
  }
}

// Shared state built once per run; read-only during the parallel sweep.
struct KindContext {
  // spiked-band / bbp-sweep
  UniversalModel noise_rademacher;
  GaussianSeriesModel noise_gaussian{CMat::Zero(1, 1), {}};
  bool have_noise = false;
  RVec spike_dir;
  double sigma_star = 0;
  std::vector<SupportSet> supports;  // per grid point, when hausdorff is on
  // block-phase
  std::vector<BlockModelSpec> specs;
  // kikuchi
  double k_star = 0;
};

GaussianSeriesModel band_noise_model(int d, int w) {
  const int half = (w - 1) / 2;
  const double amp = 1.0 / std::sqrt(static_cast<double>(w));
  std::vector<Coeff> coeffs;
  coeffs.reserve(static_cast<size_t>(d) * (half + 1));
  for (int i = 0; i < d; ++i)
    for (int o = 0; o <= half; ++o) {
      const int jj = (i + o) % d;
      if (o > 0 && jj < i) continue;  // each unordered pair once
      if (o == 0)
        coeffs.push_back(Coeff(d, {{i, i, amp}}));
      else
        coeffs.push_back(Coeff::from_pairs(d, {{std::min(i, jj), std::max(i, jj), amp}}));
    }
  return GaussianSeriesModel(CMat::Zero(d, d), std::move(coeffs));
}

GaussianSeriesModel goe_noise_model(int d) {
  const double off = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Coeff> coeffs;
  coeffs.reserve(static_cast<size_t>(d) * (d + 1) / 2);
  for (int i = 0; i < d; ++i) {
    coeffs.push_back(Coeff(d, {{i, i, std::sqrt(2.0) * off}}));
    for (int jj = i + 1; jj < d; ++jj) coeffs.push_back(Coeff::from_pairs(d, {{i, jj, off}}));
  }
  return GaussianSeriesModel(CMat::Zero(d, d), std::move(coeffs));
}

GaussianSeriesModel spiked_model(const GaussianSeriesModel& noise, const RVec& dir,
                                 double theta) {
  CMat a0 = theta * (dir * dir.transpose()).cast<Complex>();
  return GaussianSeriesModel(std::move(a0), noise.coeffs());
}

KindContext build_context(const ExperimentConfig& cfg) {
  KindContext ctx;
  if (cfg.kind == "spiked-band" || cfg.kind == "bbp-sweep") {
    GaussianSeriesModel noise =
        cfg.kind == "spiked-band" ? band_noise_model(cfg.dim, cfg.width) : goe_noise_model(cfg.dim);
    ctx.spike_dir = RVec::Ones(cfg.dim) / std::sqrt(static_cast<double>(cfg.dim));
    ctx.sigma_star = compute_parameters(noise).sigma_star;
    if (cfg.hausdorff)
      for (double g : cfg.grid) ctx.supports.push_back(free_support(spiked_model(noise, ctx.spike_dir, g)));
    if (cfg.rademacher && cfg.kind == "spiked-band")
      ctx.noise_rademacher = universal_rademacher(noise);
    else
      ctx.noise_gaussian = noise;
    ctx.have_noise = true;
  } else if (cfg.kind == "block-phase") {
    for (double g : cfg.grid) {
      BlockModelSpec spec;
      spec.block_sizes = cfg.block_sizes;
      spec.b = g * cfg.b;
      spec.z = RVec::Ones(spec.dim());
      spec.validate();
      ctx.specs.push_back(std::move(spec));
    }
  } else if (cfg.kind == "kikuchi") {
    ctx.k_star = kikuchi_params(cfg.dim, cfg.p_dim, cfg.ell).k_star;
  }
  return ctx;
}

TrialStats run_one_trial(const ExperimentConfig& cfg, const KindContext& ctx, int grid_index,
                         double g, uint64_t seed) {
  TrialStats st;
  if (cfg.kind == "spiked-band" || cfg.kind == "bbp-sweep") {
    const bool univ = cfg.rademacher && cfg.kind == "spiked-band";
    CMat xs = univ ? sample_universal(ctx.noise_rademacher, seed)
                   : sample(ctx.noise_gaussian, seed);
    RMat x = xs.real();
    x += g * (ctx.spike_dir * ctx.spike_dir.transpose());
    top_two_real(x, ctx.spike_dir, st);
    if (cfg.hausdorff) {
      SpectrumSet sp;
      Eigen::SelfAdjointEigenSolver<RMat> es(x, Eigen::EigenvaluesOnly);
      sp.eigenvalues = es.eigenvalues();
      st.hausdorff = hausdorff_distance(sp, ctx.supports[grid_index]);
    }
  } else if (cfg.kind == "block-phase") {
    const BlockModelSpec& spec = ctx.specs[grid_index];
    const RMat x = block_sample(spec, true, seed).real();
    const RVec dir = spec.z / spec.z.norm();
    top_two_real(x, dir, st);
  } else if (cfg.kind == "kikuchi") {
    RngStream xs(seed, {1});
    TensorPcaInstance inst;
    inst.n = cfg.dim;
    inst.p = cfg.p_dim;
    inst.ell = cfg.ell;
    inst.lambda = g / std::sqrt(ctx.k_star);
    inst.x = sign_vector(xs, cfg.dim);
    inst.seed = sub_seed(seed, 2);
    auto r = kikuchi_test(kikuchi_matrix(inst), cfg.dim, cfg.p_dim, cfg.ell);
    st.lambda_max = r.statistic;  // normalized statistic, threshold units
    st.lambda_2 = r.statistic * std::sqrt(ctx.k_star);
    st.overlap = r.decision ? 1.0 : 0.0;
  } else if (cfg.kind == "decode") {
    GraphDecodingInstance inst;
    inst.graph = random_regular_graph(cfg.dim, cfg.width, sub_seed(seed, 1));
    RngStream xs(seed, {2});
    inst.x = sign_vector(xs, cfg.dim);
    inst.p = 0.5 * (1.0 - g / std::sqrt(cfg.width + g * g));
    inst.seed = sub_seed(seed, 3);
    auto b = decode_build(inst);
    top_two_real(b.y, RVec(inst.x / std::sqrt(static_cast<double>(cfg.dim))), st);
  } else if (cfg.kind == "csbm") {
    const double gamma = static_cast<double>(cfg.dim) / cfg.p_dim;
    CsbmInstance inst;
    inst.n = cfg.dim;
    inst.p = cfg.p_dim;
    inst.lambda = std::sqrt(0.3 * g);
    inst.mu = std::sqrt(0.7 * gamma * g);
    RngStream vs(seed, {1});
    inst.v = sign_vector(vs, cfg.dim);
    inst.seed = sub_seed(seed, 2);
    auto est = csbm_estimate(csbm_build(inst).x_hat, cfg.dim);
    st.lambda_max = est.lambda_max;
    st.lambda_2 = est.lambda_2;
    const double nrm = est.v_hat.norm();
    if (nrm > 0) {
      const double ip = est.v_hat.dot(inst.v) / nrm;
      st.overlap = ip * ip / cfg.dim;
    }
  } else {  // scov, scov-error
    const RMat cov = scov_sample(cfg.dim, cfg.p_dim, g, seed);
    const int p = cfg.p_dim;
    if (cfg.kind == "scov") {
      Eigen::SelfAdjointEigenSolver<RMat> es(cov);
      st.lambda_max = es.eigenvalues()(p - 1);
      st.lambda_2 = p > 1 ? es.eigenvalues()(p - 2) : st.lambda_max;
      const double ip = es.eigenvectors().col(p - 1)(0);
      st.overlap = ip * ip;
    } else {
      RMat err = cov - RMat(RMat::Identity(p, p));
      err(0, 0) -= g;
      Eigen::SelfAdjointEigenSolver<RMat> es(err, Eigen::EigenvaluesOnly);
      st.lambda_max = es.eigenvalues()(p - 1);
      st.lambda_2 = es.eigenvalues()(0);  // smallest error eigenvalue
    }
  }
  return st;
}

TheoryPoint theory_point(const ExperimentConfig& cfg, const KindContext& ctx, int grid_index,
                         double g) {
  TheoryPoint tp;
  if (cfg.kind == "spiked-band" || cfg.kind == "bbp-sweep") {
    tp.value = bbp_value(g);
    tp.error_radius = g > 0 ? 2.0 * ctx.sigma_star : 0.0;  // rank-one spike
    tp.overlap_theory = bbp_overlap(g);
  } else if (cfg.kind == "block-phase") {
    auto report = phase_classify(ctx.specs[grid_index]);
    tp.value = report.lambda;
    tp.error_radius = report.error_radius;
  } else if (cfg.kind == "kikuchi") {
    tp.value = 2.0 + std::pow(static_cast<double>(cfg.dim), -0.2);
  } else if (cfg.kind == "decode") {
    tp.value = bbp_overlap(g);
    tp.overlap_theory = tp.value;
  } else if (cfg.kind == "csbm") {
    const double gamma = static_cast<double>(cfg.dim) / cfg.p_dim;
    tp.value = csbm_snr(std::sqrt(0.3 * g), std::sqrt(0.7 * gamma * g), gamma).snr;
  } else {
    auto cf = scov_closed_forms(g, static_cast<double>(cfg.p_dim) / cfg.dim);
    tp.value = cfg.kind == "scov" ? cf.s : cf.h_plus;
  }
  return tp;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? kNan : s / static_cast<double>(v.size());
}

double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1 - frac) + v[hi] * frac;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json grid_summary_to_json(const GridSummary& s) {
  json j;
  j["grid_value"] = s.grid_value;
  j["trials"] = s.trials;
  j["lambda_max_mean"] = s.lambda_max_mean;
  j["lambda_max_std"] = s.lambda_max_std;
  j["lambda_max_q25"] = s.lambda_max_q25;
  j["lambda_max_median"] = s.lambda_max_median;
  j["lambda_max_q75"] = s.lambda_max_q75;
  j["lambda_2_mean"] = s.lambda_2_mean;
  j["overlap_mean"] = s.overlap_mean;
  j["hausdorff_mean"] = s.hausdorff_mean;
  j["theory_value"] = s.theory_value;
  j["theory_error_radius"] = s.theory_error_radius;
  j["overlap_theory"] = s.overlap_theory;
  return j;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("experiment config: expected a JSON object");
  try {
    return config_from_parsed(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = cfg.kind;
  j["grid"] = cfg.grid;
  j["trials"] = cfg.trials;
  j["master_seed"] = cfg.master_seed;
  j["dim"] = cfg.dim;
  j["width"] = cfg.width;
  j["p"] = cfg.p_dim;
  j["ell"] = cfg.ell;
  if (cfg.b.size() > 0) {
    json rows = json::array();
    for (int i = 0; i < cfg.b.rows(); ++i) {
      json row = json::array();
      for (int jj = 0; jj < cfg.b.cols(); ++jj) row.push_back(cfg.b(i, jj));
      rows.push_back(row);
    }
    j["b"] = rows;
  }
  if (!cfg.block_sizes.empty()) j["block_sizes"] = cfg.block_sizes;
  j["rademacher"] = cfg.rademacher;
  j["hausdorff"] = cfg.hausdorff;
  return j.dump();
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = config_to_json(cfg);
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int resolve_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("FREESPEC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const KindContext ctx = build_context(cfg);
  const uint64_t hash = config_hash(cfg);
  const int num_grid = static_cast<int>(cfg.grid.size());
  const size_t total = static_cast<size_t>(num_grid) * cfg.trials;

  std::vector<TheoryPoint> theory(num_grid);
  for (int gi = 0; gi < num_grid; ++gi) theory[gi] = theory_point(cfg, ctx, gi, cfg.grid[gi]);

  ExperimentResult out;
  out.records.resize(total);
  auto work = [&](size_t idx) {
    const int gi = static_cast<int>(idx) / cfg.trials;
    const int trial = static_cast<int>(idx) % cfg.trials;
    TrialRecord& rec = out.records[idx];
    rec.config_hash = hash;
    rec.grid_index = gi;
    rec.grid_value = cfg.grid[gi];
    rec.trial = trial;
    rec.seed = RngStream(cfg.master_seed,
                         {static_cast<uint64_t>(gi), static_cast<uint64_t>(trial)})
                   .key()[0];
    const auto t0 = std::chrono::steady_clock::now();
    const TrialStats st = run_one_trial(cfg, ctx, gi, cfg.grid[gi], rec.seed);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    rec.lambda_max = st.lambda_max;
    rec.lambda_2 = st.lambda_2;
    rec.overlap = st.overlap;
    rec.hausdorff = st.hausdorff;
    rec.theory_value = theory[gi].value;
    rec.theory_error_radius = theory[gi].error_radius;
  };

  const int threads = std::min<int>(resolve_threads(cfg), static_cast<int>(total));
  if (threads <= 1) {
    for (size_t i = 0; i < total; ++i) work(i);
  } else {
    std::atomic<size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= total) return;
        try {
          work(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ExperimentSummary& summary = out.summary;
  summary.kind = cfg.kind;
  summary.output_stem = cfg.output;
  summary.config_hash = hash;
  summary.master_seed = cfg.master_seed;
  for (int gi = 0; gi < num_grid; ++gi) {
    std::vector<double> lmax, l2, ov, hd;
    for (int t = 0; t < cfg.trials; ++t) {
      const TrialRecord& r = out.records[static_cast<size_t>(gi) * cfg.trials + t];
      lmax.push_back(r.lambda_max);
      l2.push_back(r.lambda_2);
      ov.push_back(r.overlap);
      hd.push_back(r.hausdorff);
    }
    GridSummary gs;
    gs.grid_value = cfg.grid[gi];
    gs.trials = cfg.trials;
    gs.lambda_max_mean = mean_of(lmax);
    double var = 0;
    for (double x : lmax) var += (x - gs.lambda_max_mean) * (x - gs.lambda_max_mean);
    gs.lambda_max_std = lmax.size() > 1 ? std::sqrt(var / (lmax.size() - 1)) : 0.0;
    gs.lambda_max_q25 = quantile_of(lmax, 0.25);
    gs.lambda_max_median = quantile_of(lmax, 0.5);
    gs.lambda_max_q75 = quantile_of(lmax, 0.75);
    gs.lambda_2_mean = mean_of(l2);
    gs.overlap_mean = mean_of(ov);
    gs.hausdorff_mean = mean_of(hd);
    gs.theory_value = theory[gi].value;
    gs.theory_error_radius = theory[gi].error_radius;
    gs.overlap_theory = theory[gi].overlap_theory;
    summary.grid.push_back(gs);
  }
  if (cfg.kind == "scov" || cfg.kind == "scov-error") {
    for (double g : cfg.grid) {
      auto cf = scov_closed_forms(g, static_cast<double>(cfg.p_dim) / cfg.dim);
      summary.markers.emplace_back("H-", cf.h_minus);
      summary.markers.emplace_back("H+", cf.h_plus);
      summary.markers.emplace_back("S", cf.s);
    }
  }
  return out;
}

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  std::vector<const TrialRecord*> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const TrialRecord* a, const TrialRecord* b) {
    if (a->grid_index != b->grid_index) return a->grid_index < b->grid_index;
    return a->trial < b->trial;
  });
  os << "grid_value,trial,seed,lambda_max,lambda_2,overlap,hausdorff,theory_value,"
        "theory_error_radius\n";
  for (const TrialRecord* r : rows) {
    os << format_double(r->grid_value) << ',' << r->trial << ',' << r->seed << ','
       << format_double(r->lambda_max) << ',' << format_double(r->lambda_2) << ','
       << format_double(r->overlap) << ',' << format_double(r->hausdorff) << ','
       << format_double(r->theory_value) << ',' << format_double(r->theory_error_radius)
       << '\n';
  }
}

std::string summary_to_json(const ExperimentSummary& s) {
  json j;
  j["kind"] = s.kind;
  j["output_stem"] = s.output_stem;
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(s.config_hash));
  j["config_hash"] = hash_hex;
  j["master_seed"] = s.master_seed;
  j["algorithm"] = RngStream::kAlgorithm;
  json grid = json::array();
  for (const auto& gs : s.grid) grid.push_back(grid_summary_to_json(gs));
  j["grid"] = grid;
  if (!s.markers.empty()) {
    json markers = json::array();
    for (const auto& [name, value] : s.markers)
      markers.push_back(json{{"name", name}, {"value", value}});
    j["markers"] = markers;
  }
  return j.dump(2);
}

std::string emit_plot_script(const ExperimentSummary& s, const std::string& style) {
  std::string out;
  out += "# figure script";
  if (!s.kind.empty()) out += " for " + s.kind;
  out += " (declarative; nothing in this toolkit executes it)\n";
  out += "# style: " + (style.empty() ? std::string("default") : style) + "\n";
  if (s.grid.empty()) return out;  // header-only

  const std::string csv = s.output_stem + ".csv";
  out += "set datafile separator \",\"\n";
  out += "set key autotitle columnhead\n";
  out += "set xlabel \"grid_value\"\n";

  auto series = [&](int col, const char* with, const std::string& title) {
    return "\"" + csv + "\" using 1:" + std::to_string(col) + " with " + with + " title \"" +
           title + "\"";
  };

  if (s.kind == "decode" || s.kind == "csbm") {
    out += "set ylabel \"overlap\"\n";
    out += "plot " + series(6, "points", "empirical overlap") + ", \\\n     " +
           series(8, "lines", "theory") + "\n";
  } else if (s.kind == "scov-error") {
    out += "set ylabel \"extreme eigenvalues of the error matrix\"\n";
    for (const auto& [name, value] : s.markers) {
      const std::string v = format_double(value);
      out += "set arrow from " + v + ", graph 0 to " + v + ", graph 1 nohead dashtype 2\n";
      out += "set label \"" + name + "\" at " + v + ", graph 1.02 center\n";
    }
    out += "plot " + series(4, "points", "largest error eigenvalue") + ", \\\n     " +
           series(5, "points", "smallest error eigenvalue") + "\n";
  } else {
    out += "set ylabel \"lambda_max\"\n";
    out += "plot " + series(4, "points", "empirical lambda_max") + ", \\\n     " +
           series(8, "lines", "theory") + "\n";
  }
  return out;
}

}  // namespace freespec
