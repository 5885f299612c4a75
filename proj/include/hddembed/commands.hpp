#pragma once

// The four CLI commands as library calls. Each returns a MetricsReport whose
// `config` block is the fully resolved configuration; wall-clock timings are
// kept apart from the report body so that report files are bitwise
// reproducible.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hddembed/datasets.hpp"
#include "hddembed/embedder.hpp"
#include "hddembed/estimators.hpp"
#include "hddembed/io.hpp"
#include "hddembed/learning.hpp"
#include "hddembed/parallel.hpp"

namespace hddembed::cli {

namespace fs = std::filesystem;
using io::Json;

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumerical = 3 };

struct MetricsReport {
  std::string command;
  Json config = Json::object();
  Json metrics = Json::object();
  std::vector<std::pair<std::string, double>> timings;
  std::uint64_t seed = 0;

  Json to_json() const {
    Json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["metrics"] = metrics;
    return j;
  }

  Json timings_json() const {
    Json t = Json::object();
    for (const auto& [k, v] : timings) t[k] = v;
    return Json{{"command", command}, {"seconds", t}};
  }
};

/// `<stem>.timings.json` next to the report.
inline fs::path timings_path(const fs::path& report) {
  fs::path p = report;
  return p.replace_extension(".timings.json");
}

inline void write_report(const MetricsReport& r, const fs::path& path) {
  io::write_json(path, r.to_json());
  io::write_json(timings_path(path), r.timings_json());
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void require_finite(const Json& metrics) {
  for (const auto& [k, v] : metrics.items())
    if (v.is_number_float() && !std::isfinite(v.get<double>()))
      throw SolverError("metric '" + k + "' is not finite");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string kind = "gram-gmm";  // gram-gmm | mixture-count
  int big_n = 50;
  int n = 2500;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

inline io::RunManifest cmd_synth(const SynthOptions& o) {
  hddembed::detail::require(o.big_n >= 1, "synth: N must be >= 1");
  hddembed::detail::require(o.n >= 1, "synth: n must be >= 1");
  LabeledDistributionSet data;
  Json gen;
  if (o.kind == "gram-gmm") {
    data = gen_gram_gmms(o.big_n, o.n, o.seed);
    gen = {{"components", 5}, {"mean_range", {0.0, 1.0}}, {"sd_range", {0.05, 0.15}}, {"box", {0.0, 1.0}}};
  } else if (o.kind == "mixture-count") {
    data = gen_mixture_count(o.big_n, o.n, o.seed);
    gen = {{"components_range", {1, 10}},
           {"mean_range", {-5.0, 5.0}},
           {"a_range", {1.0, 4.0}},
           {"A_entry_range", {-1.0, 1.0}},
           {"B_diag_range", {0.0, 1.0}},
           {"box", {-kMixtureBox, kMixtureBox}},
           {"mapped_to_unit", true}};
  } else {
    throw DomainError("synth: unknown dataset kind '" + o.kind + "' (expected gram-gmm or mixture-count)");
  }

  std::error_code ec;
  fs::create_directories(o.out_dir / "samples", ec);
  if (ec) throw IoError("cannot create '" + (o.out_dir / "samples").string() + "': " + ec.message());

  io::RunManifest m;
  m.dir = o.out_dir;
  m.kind = o.kind;
  m.big_n = o.big_n;
  m.n = o.n;
  m.dim = 2;
  m.seed = o.seed;
  m.generator = gen;
  m.targets_file = "targets.csv";
  for (int i = 0; i < o.big_n; ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "samples/sample_%05d.csv", i);
    m.sample_files.emplace_back(name);
    io::write_matrix_csv(o.out_dir / name, data.samples[static_cast<std::size_t>(i)].points());
    m.pdfs.push_back(io::gmm_to_json(data.pdfs[static_cast<std::size_t>(i)]));
  }
  io::write_vector_csv(o.out_dir / m.targets_file, data.targets);
  io::write_manifest(m);
  return m;
}

// ---------------------------------------------------------------------------
// shared embedding configuration

struct EmbedSpec {
  std::string divergence = "js";  // js | hellinger | tv | l2 | mmd
  int m_lambdas = 5;
  int m = 10;
  std::optional<std::pair<double, double>> sobolev;  // (s, t) replaces the tensor grid
  int n_e = 10000;
  int d_out = 7000;
  std::optional<double> sigma_k;  // nullopt: median heuristic
  std::optional<double> kde_h;    // nullopt: Silverman
  double kde_scale = 1.0;
  /// Choose kde_scale from kde_cv_grid by held-out likelihood.
  bool kde_scale_cv = false;
  std::vector<double> kde_cv_grid = {0.4, 0.5, 0.6, 0.7, 0.8, 1.0};
  std::string nodes = "uniform";  // uniform | halton
  std::optional<double> sigma_inner;  // MMD only; nullopt: median heuristic
  int d_inner = 0;                    // MMD only; 0: 2 M |V|
  std::uint64_t seed = 0;
};

inline bool is_hdd(const std::string& div) { return div == "js" || div == "hellinger" || div == "h2" || div == "tv"; }

inline void validate_spec(const EmbedSpec& s) {
  if (!is_hdd(s.divergence) && s.divergence != "l2" && s.divergence != "mmd")
    throw DomainError("unknown divergence '" + s.divergence + "' (expected js, hellinger, tv, l2 or mmd)");
  if (s.nodes != "uniform" && s.nodes != "halton")
    throw DomainError("unknown node scheme '" + s.nodes + "' (expected uniform or halton)");
  if (s.sigma_k) hddembed::detail::require(*s.sigma_k > 0.0, "sigma must be positive");
  if (s.kde_h) hddembed::detail::require(*s.kde_h > 0.0, "kde-h must be positive");
  if (s.sigma_inner) hddembed::detail::require(*s.sigma_inner > 0.0, "sigma-inner must be positive");
  hddembed::detail::require(s.kde_scale > 0.0 && std::isfinite(s.kde_scale), "kde-scale must be positive");
  hddembed::detail::require(s.d_inner == 0 || (s.d_inner >= 2 && s.d_inner % 2 == 0),
                            "d-inner must be a positive even integer");
}

inline EmbedderConfig make_config(const EmbedSpec& s, int dim, double kde_scale) {
  EmbedderConfig c;
  c.kind = is_hdd(s.divergence) ? parse_hdd_kind(s.divergence) : HddKind::JensenShannon;
  c.dim = dim;
  c.m_lambdas = s.m_lambdas;
  if (s.sobolev)
    c.basis = SobolevBall{s.sobolev->first, s.sobolev->second};
  else
    c.basis = TensorGrid{s.m};
  c.n_e = s.n_e;
  c.d_out = s.d_out;
  c.sigma_k = s.sigma_k.value_or(1.0);
  if (s.kde_h) c.kde.bandwidths = std::vector<double>(static_cast<std::size_t>(dim), *s.kde_h);
  c.kde.bandwidth_scale = kde_scale;
  c.node_scheme = s.nodes == "halton" ? NodeScheme::Halton : NodeScheme::Uniform;
  c.seed = s.seed;
  validate(c);
  return c;
}

/// Inner MMD options with defaults resolved against the pooled data.
inline MmdOptions resolve_mmd(const EmbedSpec& s, const EmbedderConfig& c, std::span<const SampleSet> pool) {
  MmdOptions o;
  if (s.d_inner > 0) {
    o.d_inner = s.d_inner;
  } else {
    o.d_inner = 2 * c.m_lambdas * static_cast<int>(make_index_set(c.dim, c.basis).size());
  }
  o.sigma_inner = s.sigma_inner ? *s.sigma_inner : median_pooled_point_distance(pool);
  hddembed::detail::require(o.sigma_inner > 0.0, "MMD inner bandwidth resolved to zero; pass --sigma-inner");
  return o;
}

/// The KDE bandwidth multiplier, selected by held-out likelihood when asked.
inline double resolve_kde_scale(const EmbedSpec& s, std::span<const SampleSet> samples, unsigned threads,
                                Json* scores = nullptr) {
  if (!s.kde_scale_cv || s.divergence == "mmd") return s.kde_scale;
  KdeOptions base;
  if (s.kde_h) base.bandwidths = std::vector<double>(static_cast<std::size_t>(samples.front().dim()), *s.kde_h);
  auto sel = select_bandwidth_scale(samples, s.kde_cv_grid, base, threads);
  if (scores) {
    *scores = Json::array();
    for (const auto& [sc, ll] : sel.scores) scores->push_back({{"scale", sc}, {"heldout_loglik", ll}});
  }
  return sel.scale;
}

inline std::unique_ptr<DistributionEmbedder> make_embedder(const EmbedSpec& s, const EmbedderConfig& c,
                                                           const MmdOptions& mmd) {
  if (is_hdd(s.divergence)) return std::make_unique<HddEmbedder>(c);
  if (s.divergence == "l2") return std::make_unique<L2Embedder>(c);
  return std::make_unique<MmdEmbedder>(c, mmd);
}

struct StageSeconds {
  double kde = 0.0;
  double projection = 0.0;
  double mean_map = 0.0;
};

/// Same arithmetic as `e.intermediate(s)`, split into timed stages.
inline Vector timed_intermediate(const DistributionEmbedder& e, const SampleSet& s, StageSeconds& t) {
  using detail::Clock;
  if (auto* h = dynamic_cast<const HddEmbedder*>(&e)) {
    auto t0 = Clock::now();
    auto vals = kde_eval(h->fit_density(s), h->nodes().points);
    t.kde += detail::seconds_since(t0);
    auto t1 = Clock::now();
    Vector a = build_A_from_values(vals, h->measure(), h->lambdas(), h->plan()).values;
    t.projection += detail::seconds_since(t1);
    return a;
  }
  if (auto* l2 = dynamic_cast<const L2Embedder*>(&e)) {
    hddembed::detail::require(s.dim() == l2->dim(), "L2Embedder: sample dimension mismatch");
    auto t0 = Clock::now();
    auto vals = kde_eval(kde_fit(s, l2->config().kde), l2->nodes().points);
    t.kde += detail::seconds_since(t0);
    auto t1 = Clock::now();
    Vector a = project_density(vals, l2->plan());
    t.projection += detail::seconds_since(t1);
    return a;
  }
  auto t0 = Clock::now();
  Vector a = e.intermediate(s);
  t.mean_map += detail::seconds_since(t0);
  return a;
}

inline RowMatrix timed_intermediate_batch(const DistributionEmbedder& e, std::span<const SampleSet> samples,
                                          unsigned threads, StageSeconds& total) {
  RowMatrix out(static_cast<Eigen::Index>(samples.size()), e.intermediate_dim());
  std::vector<StageSeconds> per(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    hddembed::detail::require(samples[i].dim() == e.dim(), "sample dimension does not match configured dimension");
    out.row(static_cast<Eigen::Index>(i)) = timed_intermediate(e, samples[i], per[i]).transpose();
  });
  for (const auto& p : per) {
    total.kde += p.kde;
    total.projection += p.projection;
    total.mean_map += p.mean_map;
  }
  return out;
}

/// Row i = W x_i for the map's standard-normal frequencies.
inline RowMatrix project_rows(const RksMap& map, const RowMatrix& rows, unsigned threads) {
  hddembed::detail::require(rows.cols() == map.input_dim(), "rks: input width mismatch");
  RowMatrix out(rows.rows(), map.output_dim() / 2);
  parallel_for(static_cast<std::size_t>(rows.rows()), threads, [&](std::size_t i) {
    auto r = static_cast<Eigen::Index>(i);
    out.row(r) = map.project(rows.row(r).transpose()).transpose();
  });
  return out;
}

inline RowMatrix features_from_projection(const RksMap& map, const RowMatrix& proj, double sigma, unsigned threads) {
  RowMatrix out(proj.rows(), map.output_dim());
  parallel_for(static_cast<std::size_t>(proj.rows()), threads, [&](std::size_t i) {
    auto r = static_cast<Eigen::Index>(i);
    out.row(r) = map.from_projection(proj.row(r).transpose(), sigma).transpose();
  });
  return out;
}

inline Json spec_json(const EmbedSpec& s, const EmbedderConfig& c, const DistributionEmbedder& e,
                      std::optional<double> sigma_resolved, const MmdOptions* mmd) {
  Json j;
  j["divergence"] = s.divergence;
  if (is_hdd(s.divergence)) j["M"] = s.m_lambdas;
  if (s.sobolev) {
    j["basis"] = {{"type", "sobolev"}, {"s", s.sobolev->first}, {"t", s.sobolev->second}};
  } else {
    j["basis"] = {{"type", "tensor"}, {"m", s.m}};
  }
  if (s.divergence != "mmd") {
    j["basis_size"] = make_index_set(c.dim, c.basis).size();
    j["n_e"] = s.n_e;
    j["nodes"] = s.nodes;
    j["kde"] = {{"h", s.kde_h ? Json(*s.kde_h) : Json("auto")},
                {"scale", c.kde.bandwidth_scale},
                {"scale_mode", s.kde_scale_cv ? "cv" : "fixed"},
                {"boundary", "mirror"},
                {"clip_floor", c.kde.clip_floor}};
  }
  j["D"] = s.d_out;
  j["intermediate_dim"] = e.intermediate_dim();
  j["sigma_mode"] = s.sigma_k ? "fixed" : "auto";
  if (sigma_resolved) j["sigma_k"] = *sigma_resolved;
  if (mmd) {
    j["sigma_inner"] = mmd->sigma_inner;
    j["d_inner"] = mmd->d_inner;
  }
  j["seed"] = s.seed;
  return j;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedOptions {
  fs::path manifest;
  EmbedSpec spec;
  fs::path out;                     // feature CSV
  std::optional<fs::path> report;   // default: <out>.report.json
  unsigned threads = 1;
};

inline fs::path default_report_path(const fs::path& out) {
  fs::path p = out;
  return p.replace_extension(".report.json");
}

inline MetricsReport cmd_embed(const EmbedOptions& o) {
  using detail::Clock;
  validate_spec(o.spec);
  auto t_load = Clock::now();
  auto manifest = io::read_manifest(o.manifest);
  auto samples = io::load_samples(manifest);
  double load_s = detail::seconds_since(t_load);

  auto t_cv = Clock::now();
  Json cv_scores;
  const double kde_scale = resolve_kde_scale(o.spec, samples, o.threads, &cv_scores);
  double cv_s = detail::seconds_since(t_cv);
  EmbedderConfig cfg = make_config(o.spec, manifest.dim, kde_scale);
  MmdOptions mmd;
  if (o.spec.divergence == "mmd") mmd = resolve_mmd(o.spec, cfg, samples);
  auto emb = make_embedder(o.spec, cfg, mmd);

  StageSeconds st;
  RowMatrix inter = timed_intermediate_batch(*emb, samples, o.threads, st);
  double sigma = o.spec.sigma_k ? *o.spec.sigma_k : median_pairwise_distance(inter);
  hddembed::detail::require(sigma > 0.0, "sigma auto resolved to zero (all intermediate vectors equal); pass --sigma");

  auto t_rks = Clock::now();
  const RksMap& map = emb->rks();
  RowMatrix features = features_from_projection(map, project_rows(map, inter, o.threads), sigma, o.threads);
  double rks_s = detail::seconds_since(t_rks);

  MetricsReport r;
  r.command = "embed";
  r.seed = o.spec.seed;
  r.config = spec_json(o.spec, cfg, *emb, sigma, o.spec.divergence == "mmd" ? &mmd : nullptr);
  r.config["manifest"] = o.manifest.lexically_normal().string();
  const std::string cfg_hash = io::hash_hex(r.config.dump());

  double norm_dev = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) norm_dev = std::max(norm_dev, std::abs(features.row(i).norm() - 1.0));
  r.metrics["rows"] = features.rows();
  r.metrics["D"] = features.cols();
  r.metrics["sigma_k"] = sigma;
  r.metrics["max_unit_norm_deviation"] = norm_dev;
  if (auto* h = dynamic_cast<const HddEmbedder*>(emb.get())) {
    r.metrics["lambdas"] = h->lambdas();
    const Eigen::Index half = inter.cols() / 2;
    bool imag_zero = (inter.rightCols(half).array() == 0.0).all();
    r.metrics["imaginary_blocks_zero"] = imag_zero;
  }
  if (!cv_scores.is_null()) r.metrics["kde_scale_selection"] = cv_scores;
  r.metrics["config_hash"] = cfg_hash;
  detail::require_finite(r.metrics);

  io::write_matrix_csv(o.out, features,
                       "rows=" + std::to_string(features.rows()) + " D=" + std::to_string(features.cols()) +
                           " config=" + cfg_hash);
  r.timings = {{"load", load_s}, {"bandwidth_selection", cv_s}, {"kde", st.kde}, {"projection", st.projection}, {"mean_map", st.mean_map},
               {"rks", rks_s}};
  write_report(r, o.report.value_or(default_report_path(o.out)));
  return r;
}

// ---------------------------------------------------------------------------
// gram-eval

struct GramEvalOptions {
  fs::path manifest;
  EmbedSpec spec;
  double quad_tol = 1e-6;
  fs::path out_dir;
  unsigned threads = 1;
};

inline Eigen::MatrixXd::Scalar min_eigenvalue(const RowMatrix& g) {
  Eigen::MatrixXd sym = 0.5 * (g + g.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline MetricsReport cmd_gram_eval(const GramEvalOptions& o) {
  using detail::Clock;
  validate_spec(o.spec);
  if (!is_hdd(o.spec.divergence))
    throw DomainError("gram-eval: divergence must be js, hellinger or tv");
  auto manifest = io::read_manifest(o.manifest);
  if (manifest.pdfs.empty()) throw IoError("gram-eval: manifest has no pdf parameters");
  hddembed::detail::require(manifest.dim <= 2, "gram-eval: reference quadrature supports dim <= 2");
  auto samples = io::load_samples(manifest);
  auto pdfs = io::load_pdfs(manifest);
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create '" + o.out_dir.string() + "': " + ec.message());

  const HddKind kind = parse_hdd_kind(o.spec.divergence);
  const auto n = static_cast<Eigen::Index>(samples.size());

  auto t_ref = Clock::now();
  std::vector<DensityFn> fns;
  for (const auto& p : pdfs) fns.emplace_back([&p](std::span<const double> x) { return p.pdf(x); });
  auto ref = exact_hdd_matrix(fns, kind, manifest.dim, o.quad_tol, o.threads);
  double ref_s = detail::seconds_since(t_ref);

  auto t_cv = Clock::now();
  Json cv_scores;
  const double kde_scale = resolve_kde_scale(o.spec, samples, o.threads, &cv_scores);
  double cv_s = detail::seconds_since(t_cv);
  EmbedderConfig cfg = make_config(o.spec, manifest.dim, kde_scale);
  HddEmbedder emb(cfg);
  StageSeconds st;
  RowMatrix a = timed_intermediate_batch(emb, samples, o.threads, st);
  RowMatrix a_d2 = sq_distance_matrix(a);
  double sigma = o.spec.sigma_k ? *o.spec.sigma_k : median_pairwise_distance(a);
  hddembed::detail::require(sigma > 0.0, "sigma auto resolved to zero; pass --sigma");

  auto t_rks = Clock::now();
  RowMatrix z = features_from_projection(emb.rks(), project_rows(emb.rks(), a, o.threads), sigma, o.threads);
  RowMatrix g_rks(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g_rks(i, j) = z.row(i).dot(z.row(j));
  double rks_s = detail::seconds_since(t_rks);

  RowMatrix g_ref = rbf_from_sq_distances(ref.d2, sigma);
  RowMatrix g_pc = rbf_from_sq_distances(a_d2, sigma);

  MetricsReport r;
  r.command = "gram-eval";
  r.seed = o.spec.seed;
  r.config = spec_json(o.spec, cfg, emb, sigma, nullptr);
  r.config["quad_tol"] = o.quad_tol;
  r.config["quad_intervals"] = {kCoarseIntervals, kFineIntervals};
  r.metrics["N"] = n;
  r.metrics["sigma_k"] = sigma;

  double ent_s = 0.0;
  if (kind == HddKind::JensenShannon) {
    auto t_ent = Clock::now();
    RowMatrix js_ent = js_entropy_matrix(samples, cfg.kde, o.threads);
    RowMatrix g_ent = rbf_from_sq_distances(js_ent, sigma);
    ent_s = detail::seconds_since(t_ent);
    r.metrics["r2_ent"] = gram_r2(g_ent, g_ref);
    io::write_matrix_csv(o.out_dir / "gram_ent.csv", g_ent);
  }
  r.metrics["r2_pc"] = gram_r2(g_pc, g_ref);
  r.metrics["r2_rks"] = gram_r2(g_rks, g_ref);
  r.metrics["rks_min_eigenvalue"] = min_eigenvalue(g_rks);
  r.metrics["reference_diag_max_deviation"] = (g_ref.diagonal().array() - 1.0).abs().maxCoeff();
  r.metrics["quadrature_residual"] = ref.max_residual;
  if (!cv_scores.is_null()) r.metrics["kde_scale_selection"] = cv_scores;
  detail::require_finite(r.metrics);

  io::write_matrix_csv(o.out_dir / "gram_reference.csv", g_ref);
  io::write_matrix_csv(o.out_dir / "gram_pc.csv", g_pc);
  io::write_matrix_csv(o.out_dir / "gram_rks.csv", g_rks);
  r.timings = {{"reference_quadrature", ref_s}, {"bandwidth_selection", cv_s}, {"entropy", ent_s}, {"kde", st.kde},
               {"projection", st.projection}, {"rks", rks_s}};
  write_report(r, o.out_dir / "report.json");
  return r;
}

// ---------------------------------------------------------------------------
// regress

struct RegressOptions {
  fs::path train_manifest;
  fs::path test_manifest;
  EmbedSpec spec;
  std::vector<double> regs = {1e-8, 1e-6, 1e-4, 1e-2, 1.0};
  /// Used when spec.sigma_k is unset: multiples of the median heuristic.
  std::vector<double> sigma_multipliers = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> kde_scales = {1.0};
  double val_fraction = 0.1;
  std::optional<fs::path> report;
  unsigned threads = 1;
};

struct RegressData {
  std::vector<SampleSet> train, test;
  Vector y_train, y_test;
  int dim = 0;
};

inline MetricsReport regress_on(const RegressData& d, const RegressOptions& o) {
  using detail::Clock;
  validate_spec(o.spec);
  hddembed::detail::require(!o.regs.empty() && !o.kde_scales.empty(), "regress: empty hyperparameter grid");
  if (!o.spec.sigma_k) hddembed::detail::require(!o.sigma_multipliers.empty(), "regress: empty sigma grid");
  const bool uses_kde = o.spec.divergence != "mmd";
  const std::vector<double> scales = uses_kde ? o.kde_scales : std::vector<double>{1.0};

  struct PerScale {
    double median = 0.0;
    RowMatrix proj;
  };
  std::map<double, PerScale> per_scale;
  StageSeconds st;
  double rks_s = 0.0;
  MmdOptions mmd;
  std::unique_ptr<DistributionEmbedder> last_emb;
  EmbedderConfig last_cfg;
  for (double scale : scales) {
    EmbedderConfig cfg = make_config(o.spec, d.dim, scale);
    if (o.spec.divergence == "mmd") mmd = resolve_mmd(o.spec, cfg, d.train);
    auto emb = make_embedder(o.spec, cfg, mmd);
    RowMatrix inter = timed_intermediate_batch(*emb, d.train, o.threads, st);
    PerScale ps;
    ps.median = o.spec.sigma_k ? 0.0 : median_pairwise_distance(inter);
    auto t0 = Clock::now();
    ps.proj = project_rows(emb->rks(), inter, o.threads);
    rks_s += detail::seconds_since(t0);
    per_scale[scale] = std::move(ps);
    last_emb = std::move(emb);
    last_cfg = cfg;
  }
  const RksMap& map = last_emb->rks();  // identical frequencies for every scale

  std::vector<HyperParams> grid;
  for (double scale : scales) {
    std::vector<double> sigmas;
    if (o.spec.sigma_k) {
      sigmas = {*o.spec.sigma_k};
    } else {
      for (double mult : o.sigma_multipliers) sigmas.push_back(mult * per_scale.at(scale).median);
    }
    for (double s : sigmas) {
      hddembed::detail::require(s > 0.0, "regress: resolved sigma must be positive");
      for (double reg : o.regs) grid.push_back({reg, s, scale});
    }
  }

  auto t_sel = Clock::now();
  FeatureFn features = [&](double sigma, double scale) {
    auto t0 = Clock::now();
    RowMatrix f = features_from_projection(map, per_scale.at(scale).proj, sigma, o.threads);
    rks_s += detail::seconds_since(t0);
    return f;
  };
  SelectionResult sel = model_select(features, d.y_train, grid, o.val_fraction, o.spec.seed);
  double select_s = detail::seconds_since(t_sel);

  auto t_fit = Clock::now();
  RowMatrix f_train = features(sel.best.sigma_k, sel.best.kde_scale);
  RidgeModel model = ridge_fit(f_train, d.y_train, sel.best.reg);
  double fit_s = detail::seconds_since(t_fit);

  EmbedderConfig best_cfg = make_config(o.spec, d.dim, sel.best.kde_scale);
  auto best_emb = make_embedder(o.spec, best_cfg, mmd);
  RowMatrix test_inter = timed_intermediate_batch(*best_emb, d.test, o.threads, st);
  auto t1 = Clock::now();
  RowMatrix f_test =
      features_from_projection(map, project_rows(map, test_inter, o.threads), sel.best.sigma_k, o.threads);
  rks_s += detail::seconds_since(t1);

  Vector pred_test = ridge_predict(model, f_test);
  Vector pred_train = ridge_predict(model, f_train);
  const double train_mean = d.y_train.mean();

  MetricsReport r;
  r.command = "regress";
  r.seed = o.spec.seed;
  r.config = spec_json(o.spec, best_cfg, *best_emb, std::nullopt, o.spec.divergence == "mmd" ? &mmd : nullptr);
  r.config["train"] = o.train_manifest.lexically_normal().string();
  r.config["test"] = o.test_manifest.lexically_normal().string();
  r.config["grid"] = {{"reg", o.regs},
                      {"sigma", o.spec.sigma_k ? Json(std::vector<double>{*o.spec.sigma_k})
                                               : Json{{"median_multipliers", o.sigma_multipliers}}},
                      {"kde_scale", scales}};
  r.config["val_fraction"] = o.val_fraction;

  r.metrics["n_train"] = d.y_train.size();
  r.metrics["n_test"] = d.y_test.size();
  r.metrics["best_reg"] = sel.best.reg;
  r.metrics["best_sigma_k"] = sel.best.sigma_k;
  r.metrics["best_kde_scale"] = sel.best.kde_scale;
  r.metrics["val_rmse"] = sel.best_val_rmse;
  r.metrics["train_rmse"] = rmse(pred_train, d.y_train);
  r.metrics["test_rmse"] = rmse(pred_test, d.y_test);
  r.metrics["constant_train_mean_rmse"] = rmse(Vector::Constant(d.y_test.size(), train_mean), d.y_test);
  r.metrics["constant_5_5_rmse"] = rmse(Vector::Constant(d.y_test.size(), 5.5), d.y_test);
  if (d.y_test.size() >= 2 && (d.y_test.array() != d.y_test[0]).any())
    r.metrics["test_r2"] = r2_score(std::span<const double>(pred_test.data(), static_cast<std::size_t>(pred_test.size())),
                                    std::span<const double>(d.y_test.data(), static_cast<std::size_t>(d.y_test.size())));
  Json table = Json::array();
  for (const auto& [hp, err] : sel.table)
    table.push_back({{"reg", hp.reg}, {"sigma_k", hp.sigma_k}, {"kde_scale", hp.kde_scale}, {"val_rmse", err}});
  r.metrics["selection"] = table;
  detail::require_finite(r.metrics);

  r.timings = {{"kde", st.kde},       {"projection", st.projection}, {"mean_map", st.mean_map},
               {"rks", rks_s},        {"model_select", select_s},    {"final_fit", fit_s}};
  return r;
}

inline RegressData load_regress_data(const fs::path& train, const fs::path& test) {
  auto mtr = io::read_manifest(train);
  auto mte = io::read_manifest(test);
  if (mtr.dim != mte.dim)
    throw DomainError("regress: train dimension " + std::to_string(mtr.dim) + " does not match test dimension " +
                      std::to_string(mte.dim));
  RegressData d;
  d.dim = mtr.dim;
  d.train = io::load_samples(mtr);
  d.test = io::load_samples(mte);
  auto ytr = io::load_targets(mtr), yte = io::load_targets(mte);
  d.y_train = Eigen::Map<Vector>(ytr.data(), static_cast<Eigen::Index>(ytr.size()));
  d.y_test = Eigen::Map<Vector>(yte.data(), static_cast<Eigen::Index>(yte.size()));
  return d;
}

inline MetricsReport cmd_regress(const RegressOptions& o) {
  auto d = load_regress_data(o.train_manifest, o.test_manifest);
  MetricsReport r = regress_on(d, o);
  if (o.report) write_report(r, *o.report);
  return r;
}

/// Exit code for an exception escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const QuadratureError*>(&e) || dynamic_cast<const SolverError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const IoError*>(&e)) return kExitUsage;
  return kExitNumerical;
}

}  // namespace hddembed::cli
