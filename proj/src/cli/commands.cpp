// Copyright 2026 The FlowCon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowcon/cli/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "flowcon/checkpoint.hpp"
#include "flowcon/cli/config.hpp"
#include "flowcon/datasets.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/metrics.hpp"
#include "flowcon/oodscore.hpp"
#include "flowcon/runtime.hpp"
#include "flowcon/train.hpp"

namespace flowcon::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path.string());
  out << text;
  if (!out) throw IoError("write failed", path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory", dir.string());
}

// ---------------------------------------------------------------- gen-synth

struct SynthArgs {
  std::string kind;
  std::string out;
  std::size_t n = 0;
  std::size_t n_test = 0;
  std::size_t n_ood = 0;
  double noise = 0.08;
  std::size_t k = 10;
  std::size_t d = 64;
  double mean_scale = 4.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

void cmd_gen_synth(const SynthArgs& a, const CLI::App& sub, std::ostream& out) {
  const bool moons = a.kind == "moons";
  if (moons) {
    for (const char* flag : {"--k", "--d", "--mean-scale", "--sigma"}) {
      if (sub.count(flag) > 0) {
        throw UsageError(std::string(flag) + " does not apply to --kind moons");
      }
    }
  } else if (sub.count("--noise") > 0) {
    throw UsageError("--noise does not apply to --kind blobs");
  }
  ensure_dir(a.out);

  FeatureDataset all, ood;
  double fraction = 0.0;
  if (moons) {
    const std::size_t n = a.n ? a.n : 2000;
    const std::size_t n_test = a.n_test ? a.n_test : 500;
    all = gen_moons(n + n_test, a.noise, a.seed);
    ood = gen_moons_ood(a.n_ood ? a.n_ood : 400, a.seed);
    fraction = static_cast<double>(n) / static_cast<double>(n + n_test);
  } else {
    const std::size_t n = a.n ? a.n : 500;
    const std::size_t n_test = a.n_test ? a.n_test : 100;
    all = gen_blobs(a.k, a.d, n + n_test, a.mean_scale, a.sigma, a.seed);
    ood = gen_blob_ood(a.k, a.d, a.n_ood ? a.n_ood : 1000, a.mean_scale, a.sigma, a.seed);
    fraction = static_cast<double>(n) / static_cast<double>(n + n_test);
  }
  auto [train, test] = split(all, fraction, a.seed);
  train.provenance += " part=train";
  test.provenance += " part=test";
  const fs::path dir(a.out);
  write_features(train, (dir / "id_train.fcft").string());
  write_features(test, (dir / "id_test.fcft").string());
  write_features(ood, (dir / "ood.fcft").string());
  out << "wrote " << (dir / "id_train.fcft").string() << " (" << train.size() << " rows), "
      << (dir / "id_test.fcft").string() << " (" << test.size() << " rows), "
      << (dir / "ood.fcft").string() << " (" << ood.size() << " rows); dim=" << train.dim
      << " num_classes=" << train.num_classes << '\n';
}

// -------------------------------------------------------------------- train

struct TrainOutcome {
  fs::path checkpoint;
  fs::path prototypes;
  FitResult fit;
};

TrainOutcome train_from_config(const RunConfig& rc, std::ostream& out) {
  rc.validate();
  const FeatureDataset ds = read_features(rc.train_features);
  if (rc.dim != 0 && rc.dim != ds.dim) {
    throw ConfigError("d = " + std::to_string(rc.dim) + " but training features have dim " +
                      std::to_string(ds.dim));
  }
  const std::size_t d = ds.dim;
  const std::size_t h = rc.hidden ? rc.hidden : default_hidden_width(d);
  const fs::path dir(rc.out_dir);
  ensure_dir(dir);

  FlowModel model;
  FitOptions opts;
  if (!rc.resume_from.empty()) {
    model = load_checkpoint(rc.resume_from);
    if (model.dim != d) throw ConfigError("resume checkpoint dim does not match the features");
    opts.resume = load_train_state(rc.resume_from + ".fcos", model);
  } else {
    model = init_model(d, rc.blocks, h, rc.train.seed, rc.scale_clamp);
  }

  TrainOutcome res;
  res.checkpoint = dir / "model.fckp";
  res.prototypes = dir / "prototypes.fcpt";
  opts.checkpoint_path = res.checkpoint.string();
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot open for writing", (dir / "train_log.jsonl").string());
  opts.log = &log;
  write_text(dir / "config.txt", rc.to_text());

  res.fit = fit(model, ds, rc.train, opts);
  const ClassPrototypes protos = compute_prototypes(model, ds);
  save_prototypes(protos, res.prototypes.string());

  out << "trained d=" << d << " K=" << model.num_blocks() << " h=" << model.hidden << " for "
      << res.fit.state.epochs_done << " epochs (" << res.fit.state.adam.step << " steps)";
  if (!res.fit.epochs.empty()) {
    const auto& last = res.fit.epochs.back().mean;
    out << "; final l_total=" << last.total << " l_con=" << last.l_con
        << " l_flow=" << last.l_flow;
  }
  out << "\ncheckpoint " << res.checkpoint.string() << ", prototypes " << res.prototypes.string()
      << '\n';
  return res;
}

RunConfig config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig rc = load_config(path);
  for (const auto& s : sets) {
    const auto [k, v] = split_assignment(s);
    rc.set(k, v, "--set");
  }
  return rc;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string prototypes;
  std::string id_test;
  std::vector<std::string> ood;
  std::string out;
  double ratio = 0.2;
  std::uint64_t seed = 0;
  std::size_t bins = 100;
};

std::vector<std::pair<std::string, FeatureDataset>> load_ood_sets(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, FeatureDataset>> sets;
  for (const auto& s : specs) {
    std::string name, path;
    if (const auto eq = s.find('='); eq != std::string::npos) {
      name = s.substr(0, eq);
      path = s.substr(eq + 1);
    } else {
      path = s;
      name = fs::path(s).stem().string();
    }
    for (const auto& [existing, _] : sets) {
      if (existing == name) throw UsageError("duplicate OOD set name '" + name + "'");
    }
    sets.emplace_back(name, read_features(path));
  }
  return sets;
}

void check_dims(const FlowModel& model, const ClassPrototypes& protos, const FeatureDataset& ds,
                const std::string& what) {
  if (ds.dim != model.dim || protos.dim != model.dim) {
    throw InvalidArgument("dimension mismatch: model d=" + std::to_string(model.dim) +
                          ", prototypes d=" + std::to_string(protos.dim) + ", " + what +
                          " dim=" + std::to_string(ds.dim));
  }
}

void print_table(std::ostream& out, const std::vector<std::pair<std::string, OodMetrics>>& rows,
                 const std::string& first_column) {
  out << std::left << std::setw(16) << first_column << std::right << std::setw(10) << "AUROC"
      << std::setw(10) << "AUPR-S" << std::setw(10) << "AUPR-E" << std::setw(10) << "FPR95"
      << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& [name, m] : rows) {
    out << std::left << std::setw(16) << name << std::right << std::setw(10) << m.auroc
        << std::setw(10) << m.aupr_s << std::setw(10) << m.aupr_e << std::setw(10) << m.fpr95
        << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

SuiteResult run_eval(const EvalArgs& a, bool with_reports, std::ostream& out) {
  const FlowModel model = load_checkpoint(a.model);
  const ClassPrototypes protos = load_prototypes(a.prototypes);
  const FeatureDataset id_test = read_features(a.id_test);
  check_dims(model, protos, id_test, "ID test");
  const auto ood_sets = load_ood_sets(a.ood);
  for (const auto& [name, ds] : ood_sets) check_dims(model, protos, ds, "OOD set '" + name + "'");

  EvalOptions opts;
  opts.seed = a.seed;
  opts.ratio = a.ratio;
  opts.bins = a.bins;
  SuiteResult suite = evaluate_suite(model, protos, id_test, ood_sets, opts);

  const fs::path dir(a.out);
  ensure_dir(dir);
  std::vector<std::pair<std::string, OodMetrics>> rows;
  for (const auto& r : suite.per_set) {
    write_text(dir / ("hist_" + r.name + ".csv"), r.hist.to_csv());
    if (with_reports) write_text(dir / ("report_" + r.name + ".json"), r.to_json().dump(2) + "\n");
    rows.emplace_back(r.name, r.metrics);
  }
  if (with_reports) {
    write_text(dir / "report_mean.json", suite.mean.to_json().dump(2) + "\n");
    if (!suite.per_set.empty()) rows.emplace_back("mean", suite.mean.metrics);
    print_table(out, rows, "OOD set");
  } else {
    out << "wrote " << suite.per_set.size() << " histogram(s) to " << dir.string() << '\n';
  }
  for (const auto& e : suite.errors) out << "skipped: " << e << '\n';
  return suite;
}

// ----------------------------------------------------------------- classify

struct ClassifyArgs {
  std::string model;
  std::string prototypes;
  std::string features;
  std::string out;
};

void cmd_classify(const ClassifyArgs& a, std::ostream& out) {
  const FlowModel model = load_checkpoint(a.model);
  const ClassPrototypes protos = load_prototypes(a.prototypes);
  const FeatureDataset ds = read_features(a.features);
  check_dims(model, protos, ds, "features");
  const auto scores = score_dataset(model, protos, ds);
  const Accuracy acc = accuracy(ds, scores);
  nlohmann::ordered_json j;
  j["accuracy"] = acc.accuracy;
  j["correct"] = acc.correct;
  j["labeled"] = acc.labeled;
  j["unlabeled_excluded"] = acc.unlabeled;
  if (!a.out.empty()) {
    const fs::path p(a.out);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_text(p, j.dump(2) + "\n");
  }
  out << "accuracy " << acc.accuracy << " (" << acc.correct << "/" << acc.labeled << ")";
  if (acc.unlabeled) out << ", " << acc.unlabeled << " unlabeled rows excluded";
  out << '\n';
}

// ------------------------------------------------------------- export-embed

struct EmbedArgs {
  std::string model;
  std::vector<std::string> inputs;
  std::string out;
};

void cmd_export_embed(const EmbedArgs& a, std::ostream& out) {
  const FlowModel model = load_checkpoint(a.model);
  std::ostringstream csv;
  csv << std::setprecision(17);
  for (std::size_t j = 0; j < model.dim; ++j) csv << 'z' << j << ',';
  csv << "label,source\n";
  std::size_t rows = 0;
  for (const auto& spec : a.inputs) {
    std::string tag, path;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      tag = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      tag = fs::path(spec).stem().string();
    }
    const FeatureDataset ds = read_features(path);
    if (ds.dim != model.dim) {
      throw InvalidArgument("dimension mismatch: model d=" + std::to_string(model.dim) + ", " +
                            path + " dim=" + std::to_string(ds.dim));
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto z = flow_forward(model, ds.row_f64(i)).z_flow;
      for (double v : z) csv << v << ',';
      if (ds.labels[i] == kUnlabeled) {
        csv << -1;
      } else {
        csv << ds.labels[i];
      }
      csv << ',' << tag << '\n';
      ++rows;
    }
  }
  const fs::path p(a.out);
  if (p.has_parent_path()) ensure_dir(p.parent_path());
  write_text(p, csv.str());
  out << "wrote " << rows << " rows to " << p.string() << '\n';
}

// ------------------------------------------------------------ sweep-lambda

struct SweepArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<double> lambdas{0.05, 0.07, 0.3, 0.5, 1.0};
  std::string id_test;
  std::vector<std::string> ood;
  std::string out;
  double ratio = 0.2;
  std::uint64_t seed = 0;
};

void cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::vector<std::pair<std::string, OodMetrics>> rows;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << std::setprecision(17) << "lambda,auroc,aupr_s,aupr_e,fpr95\n";
  for (double lambda : a.lambdas) {
    RunConfig rc = config_with_overrides(a.config, a.sets);
    rc.train.loss.lambda = lambda;
    const fs::path run_dir = dir / ("lambda_" + shortest(lambda));
    rc.out_dir = run_dir.string();
    rc.resume_from.clear();
    out << "== lambda " << shortest(lambda) << '\n';
    const TrainOutcome t = train_from_config(rc, out);

    EvalArgs e;
    e.model = t.checkpoint.string();
    e.prototypes = t.prototypes.string();
    e.id_test = a.id_test;
    e.ood = a.ood;
    e.out = (run_dir / "eval").string();
    e.ratio = a.ratio;
    e.seed = a.seed;
    const SuiteResult suite = run_eval(e, true, out);
    if (suite.per_set.empty()) throw InvalidArgument("no OOD set could be evaluated");

    const OodMetrics& m = suite.mean.metrics;
    rows.emplace_back(shortest(lambda), m);
    nlohmann::ordered_json j;
    j["lambda"] = lambda;
    j["auroc"] = m.auroc;
    j["aupr_s"] = m.aupr_s;
    j["aupr_e"] = m.aupr_e;
    j["fpr95"] = m.fpr95;
    results.push_back(j);
    csv << lambda << ',' << m.auroc << ',' << m.aupr_s << ',' << m.aupr_e << ',' << m.fpr95
        << '\n';
  }
  write_text(dir / "sweep.json", results.dump(2) + "\n");
  write_text(dir / "sweep.csv", csv.str());
  out << "\nlambda sweep (mean over OOD sets)\n";
  print_table(out, rows, "lambda");
}

void add_eval_options(CLI::App* sub, EvalArgs& a) {
  sub->add_option("--model", a.model, "FCKP checkpoint")->required();
  sub->add_option("--prototypes", a.prototypes, "FCPT prototypes")->required();
  sub->add_option("--id-test", a.id_test, "ID test features")->required();
  sub->add_option("--ood", a.ood, "OOD features, NAME=PATH or PATH")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--ratio", a.ratio, "OOD rows per ID test row")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "subsampling seed");
  sub->add_option("--bins", a.bins, "histogram bins")->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Normalizing-flow OOD detector: training, scoring and evaluation", "flowcon"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* gen = app.add_subcommand("gen-synth", "write synthetic ID train/test and OOD features");
  gen->add_option("--kind", synth.kind, "moons or blobs")
      ->required()
      ->check(CLI::IsMember({"moons", "blobs"}));
  gen->add_option("--out", synth.out, "output directory")->required();
  gen->add_option("--n", synth.n, "training rows (moons: total, blobs: per class)");
  gen->add_option("--n-test", synth.n_test, "test rows (moons: total, blobs: per class)");
  gen->add_option("--n-ood", synth.n_ood, "OOD rows");
  gen->add_option("--noise", synth.noise, "moons noise")->check(CLI::NonNegativeNumber);
  gen->add_option("--k", synth.k, "blob classes")->check(CLI::PositiveNumber);
  gen->add_option("--d", synth.d, "blob dimension")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--mean-scale", synth.mean_scale, "radius of the class-mean sphere");
  gen->add_option("--sigma", synth.sigma, "blob standard deviation");
  gen->add_option("--seed", synth.seed, "master seed");

  std::string config_path;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "train a model from a key=value config");
  train->add_option("config", config_path, "config file")->required();
  train->add_option("--set", sets, "override a config entry, key=value");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "OOD metrics, reports and histograms");
  add_eval_options(eval, eval_args);

  EvalArgs hist_args;
  auto* hist = app.add_subcommand("export-hist", "score histograms only");
  add_eval_options(hist, hist_args);

  ClassifyArgs cls;
  auto* classify_cmd = app.add_subcommand("classify", "Bayes-rule accuracy on labeled features");
  classify_cmd->add_option("--model", cls.model, "FCKP checkpoint")->required();
  classify_cmd->add_option("--prototypes", cls.prototypes, "FCPT prototypes")->required();
  classify_cmd->add_option("--features", cls.features, "labeled features")->required();
  classify_cmd->add_option("--out", cls.out, "accuracy JSON");

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand("export-embed", "CSV of z_flow per sample");
  embed_cmd->add_option("--model", embed.model, "FCKP checkpoint")->required();
  embed_cmd->add_option("--input", embed.inputs, "features, TAG=PATH or PATH")->required();
  embed_cmd->add_option("--out", embed.out, "CSV path")->required();

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "train and evaluate once per lambda");
  sweep_cmd->add_option("config", sweep.config, "base config file")->required();
  sweep_cmd->add_option("--set", sweep.sets, "override a config entry, key=value");
  sweep_cmd->add_option("--lambdas", sweep.lambdas, "lambda values")->delimiter(',');
  sweep_cmd->add_option("--id-test", sweep.id_test, "ID test features")->required();
  sweep_cmd->add_option("--ood", sweep.ood, "OOD features, NAME=PATH or PATH")->required();
  sweep_cmd->add_option("--out", sweep.out, "output directory")->required();
  sweep_cmd->add_option("--ratio", sweep.ratio, "OOD rows per ID test row")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep.seed, "subsampling seed");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  configure_threads_from_env();
  try {
    if (*gen) {
      cmd_gen_synth(synth, *gen, out);
    } else if (*train) {
      train_from_config(config_with_overrides(config_path, sets), out);
    } else if (*eval) {
      run_eval(eval_args, true, out);
    } else if (*hist) {
      run_eval(hist_args, false, out);
    } else if (*classify_cmd) {
      cmd_classify(cls, out);
    } else if (*embed_cmd) {
      cmd_export_embed(embed, out);
    } else if (*sweep_cmd) {
      cmd_sweep(sweep, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace flowcon::cli
