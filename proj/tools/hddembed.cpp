// hddembed: dataset generation, embedding, Gram evaluation and regression
// on sample sets.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hddembed/commands.hpp"

namespace {

using namespace hddembed;
using namespace hddembed::cli;

/// "auto" or a positive number.
std::optional<double> parse_auto(const std::string& flag, const std::string& v) {
  if (v == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DomainError(flag + " must be 'auto' or a number, got '" + v + "'");
  }
}

struct SpecFlags {
  EmbedSpec spec;
  std::string sigma = "auto";
  std::string kde_h = "auto";
  std::string sigma_inner = "auto";
  std::string kde_scale = "1";
  std::vector<double> sobolev;

  void add(CLI::App* app, int default_d, std::string default_kde_scale = "1") {
    spec.d_out = default_d;
    kde_scale = std::move(default_kde_scale);
    app->add_option("--divergence", spec.divergence, "js, hellinger, tv, l2 or mmd")
        ->capture_default_str()
        ->check(CLI::IsMember({"js", "hellinger", "h2", "tv", "l2", "mmd"}));
    app->add_option("--M", spec.m_lambdas, "number of lambda draws")->capture_default_str();
    app->add_option("--m", spec.m, "basis functions per dimension (tensor grid)")->capture_default_str();
    app->add_option("--sobolev", sobolev, "Sobolev index set s t (replaces --m)")->expected(2);
    app->add_option("--ne", spec.n_e, "integration nodes")->capture_default_str();
    app->add_option("--D", spec.d_out, "output feature dimension (even)")->capture_default_str();
    app->add_option("--sigma", sigma, "outer RBF bandwidth or 'auto'")->capture_default_str();
    app->add_option("--kde-h", kde_h, "KDE bandwidth or 'auto' (Silverman)")->capture_default_str();
    app->add_option("--kde-scale", kde_scale, "multiplier on the KDE bandwidth, or 'cv' (held-out likelihood)")->capture_default_str();
    app->add_option("--nodes", spec.nodes, "uniform or halton")->capture_default_str();
    app->add_option("--sigma-inner", sigma_inner, "MMD inner bandwidth or 'auto'")->capture_default_str();
    app->add_option("--d-inner", spec.d_inner, "MMD inner feature dimension (0: 2 M |V|)")->capture_default_str();
    app->add_option("--seed", spec.seed, "root seed")->capture_default_str();
  }

  EmbedSpec resolve() {
    spec.sigma_k = parse_auto("--sigma", sigma);
    spec.kde_h = parse_auto("--kde-h", kde_h);
    spec.sigma_inner = parse_auto("--sigma-inner", sigma_inner);
    spec.kde_scale_cv = kde_scale == "cv";
    if (!spec.kde_scale_cv) {
      auto v = parse_auto("--kde-scale", kde_scale);
      if (!v) throw DomainError("--kde-scale must be 'cv' or a number");
      spec.kde_scale = *v;
    }
    if (!sobolev.empty()) spec.sobolev = std::make_pair(sobolev[0], sobolev[1]);
    return spec;
  }
};

void print_metrics(const MetricsReport& r) {
  Json shown = Json::object();
  for (const auto& [k, v] : r.metrics.items())
    if (!v.is_array()) shown[k] = v;
  std::cout << shown.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature embeddings of sample sets for information-theoretic RBF kernels"};
  app.require_subcommand(1);
  unsigned threads = default_thread_count();
  app.add_option("--threads", threads, "worker threads (default: HDDEMBED_THREADS or all cores)");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth.kind, "gram-gmm or mixture-count")
      ->capture_default_str()
      ->check(CLI::IsMember({"gram-gmm", "mixture-count"}));
  synth_cmd->add_option("--N", synth.big_n, "number of distributions")->capture_default_str();
  synth_cmd->add_option("--n", synth.n, "points per distribution")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "root seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();

  EmbedOptions embed;
  SpecFlags embed_flags;
  std::string embed_report;
  auto* embed_cmd = app.add_subcommand("embed", "embed every sample set of a dataset");
  embed_cmd->add_option("manifest", embed.manifest, "dataset directory or manifest.json")->required();
  embed_flags.add(embed_cmd, 7000);
  embed_cmd->add_option("--out", embed.out, "feature matrix CSV")->required();
  embed_cmd->add_option("--report", embed_report, "report JSON (default: <out>.report.json)");

  GramEvalOptions gram;
  SpecFlags gram_flags;
  auto* gram_cmd = app.add_subcommand("gram-eval", "compare estimated Gram matrices with quadrature");
  gram_cmd->add_option("manifest", gram.manifest, "dataset directory with true pdfs")->required();
  gram_flags.add(gram_cmd, 7000, "cv");
  gram_cmd->add_option("--quad-tol", gram.quad_tol, "Richardson tolerance of the reference")->capture_default_str();
  gram_cmd->add_option("--out", gram.out_dir, "output directory")->required();

  RegressOptions reg;
  SpecFlags reg_flags;
  std::string reg_report;
  auto* reg_cmd = app.add_subcommand("regress", "ridge regression on embedded sample sets");
  reg_cmd->add_option("--train", reg.train_manifest, "training dataset")->required();
  reg_cmd->add_option("--test", reg.test_manifest, "test dataset")->required();
  reg_flags.add(reg_cmd, 5000);
  reg_cmd->add_option("--regs", reg.regs, "ridge regularization grid")->capture_default_str();
  reg_cmd->add_option("--sigma-grid", reg.sigma_multipliers, "multiples of the median bandwidth (with --sigma auto)")
      ->capture_default_str();
  reg_cmd->add_option("--kde-scales", reg.kde_scales, "KDE bandwidth multipliers")->capture_default_str();
  reg_cmd->add_option("--val-fraction", reg.val_fraction, "validation share of the training set")
      ->capture_default_str();
  reg_cmd->add_option("--report", reg_report, "report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (threads == 0) throw DomainError("--threads must be >= 1");
    if (*synth_cmd) {
      auto m = cmd_synth(synth);
      std::cout << "wrote " << m.big_n << " sample files to " << m.dir.string() << '\n';
    } else if (*embed_cmd) {
      embed.spec = embed_flags.resolve();
      embed.threads = threads;
      if (!embed_report.empty()) embed.report = embed_report;
      print_metrics(cmd_embed(embed));
    } else if (*gram_cmd) {
      gram.spec = gram_flags.resolve();
      gram.threads = threads;
      print_metrics(cmd_gram_eval(gram));
    } else if (*reg_cmd) {
      reg.spec = reg_flags.resolve();
      reg.threads = threads;
      if (!reg_report.empty()) reg.report = reg_report;
      print_metrics(cmd_regress(reg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
