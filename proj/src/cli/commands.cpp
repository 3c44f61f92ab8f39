#include "phasen/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasen/cli/run_config.hpp"
#include "phasen/cli/wav.hpp"
#include "phasen/metrics/metrics.hpp"
#include "phasen/model/checkpoint.hpp"
#include "phasen/model/model.hpp"
#include "phasen/optim/grad_suite.hpp"
#include "phasen/optim/train.hpp"

namespace phasen::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out_dir;

  RunConfig resolve() const {
    RunConfig c;
    try {
      if (!config_path.empty()) apply_config_file(c, config_path);
      for (const auto& s : sets) apply_assignment(c, s);
      c.arch.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (seed) c.train.seed = *seed;
    if (!out_dir.empty()) c.output_dir = out_dir;
    return c;
  }
};

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

optim::Dataset load_manifest(const RunConfig& c, std::ostream& err) {
  if (c.manifest.empty()) throw UsageError("no manifest given (--manifest or manifest=...)");
  optim::Dataset data = optim::load_dataset(optim::read_manifest(c.manifest), read_wav);
  for (const auto& w : data.warnings) err << "warning: " << w << '\n';
  return data;
}

double mean_sdr(model::PhasenModel<float>* f32, model::PhasenModel<double>* f64,
                const optim::Dataset& data) {
  double total = 0.0;
  for (const auto& pair : data.pairs) {
    const dsp::AudioClip enhanced = f32 ? model::model_forward(*f32, pair.noisy).audio
                                        : model::model_forward(*f64, pair.noisy).audio;
    total += metrics::sdr(pair.clean, enhanced);
  }
  return total / static_cast<double>(data.pairs.size());
}

template <typename T>
optim::TrainResult<T> run_training(const RunConfig& c, const optim::Dataset& data,
                                   const std::string& resume, const fs::path& out_dir,
                                   std::ostream& err, bool checkpoints = true) {
  optim::TrainState<T> state = resume.empty()
                                   ? optim::initial_state<T>(c.arch, c.train.seed)
                                   : optim::state_from_checkpoint<T>(model::read_checkpoint(resume));
  if (!resume.empty() && !(state.params.config() == c.arch))
    err << "note: architecture taken from checkpoint " << resume << '\n';
  fs::create_directories(out_dir);
  optim::TrainOptions opts;
  opts.loss_csv = out_dir / "loss.csv";
  if (checkpoints) {
    opts.checkpoint_dir = c.checkpoint_dir.empty() ? out_dir / "checkpoints" : fs::path(c.checkpoint_dir);
    opts.checkpoint_every = c.checkpoint_every;
  }
  const std::size_t total = c.train.max_steps > 0
                                ? c.train.max_steps
                                : c.train.epochs * ((data.pairs.size() + c.train.batch_size - 1) /
                                                    c.train.batch_size);
  const std::size_t every = std::max<std::size_t>(1, total / 20);
  opts.on_step = [&err, every, total](const optim::StepLog& row) {
    if (row.step % every == 0 || row.step == total)
      err << "step " << row.step << "/" << total << "  lr " << row.lr << "  loss "
          << row.total_loss << '\n';
  };
  std::ofstream validation;
  std::optional<model::PhasenModel<T>> probe;
  if (c.validate_sdr) {
    validation.open(out_dir / "validation.csv");
    validation << "epoch,mean_sdr_db\n";
    probe.emplace(state.params);
    opts.on_epoch = [&](std::size_t epoch) {
      double sdr_db = 0.0;
      if constexpr (std::is_same_v<T, float>)
        sdr_db = mean_sdr(&*probe, nullptr, data);
      else
        sdr_db = mean_sdr(nullptr, &*probe, data);
      validation << epoch << ',' << std::setprecision(17) << sdr_db << '\n' << std::flush;
      err << "epoch " << epoch << "  mean SDR " << sdr_db << " dB\n";
    };
  }
  return optim::train(data, c.train, std::move(state), opts);
}

int cmd_train(const Common& common, const std::string& manifest, std::ostream& out,
              std::ostream& err) {
  RunConfig c = common.resolve();
  if (!manifest.empty()) c.manifest = manifest;
  const optim::Dataset data = load_manifest(c, err);
  const fs::path out_dir = c.output_dir;
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "config.txt") << run_config_to_text(c);
  double last = 0.0;
  std::size_t steps = 0;
  if (c.precision == Precision::kF64) {
    const auto r = run_training<double>(c, data, common.checkpoint, out_dir, err);
    last = r.log.empty() ? 0.0 : r.log.back().total_loss;
    steps = r.state.step;
  } else {
    const auto r = run_training<float>(c, data, common.checkpoint, out_dir, err);
    last = r.log.empty() ? 0.0 : r.log.back().total_loss;
    steps = r.state.step;
  }
  out << "trained " << steps << " steps; final total_loss " << std::setprecision(6) << last
      << "; log " << (out_dir / "loss.csv").string() << '\n';
  return kExitOk;
}

template <typename T>
int enhance_all(const RunConfig& c, const std::vector<fs::path>& inputs, const std::string& ckpt,
                bool identity, std::ostream& out) {
  std::optional<model::PhasenModel<T>> net;
  if (!ckpt.empty())
    net.emplace(model::params_from_checkpoint<T>(model::read_checkpoint(ckpt)));
  else
    net.emplace(model::ModelParams<T>::initialize(c.arch, c.train.seed));
  model::ForwardOptions fwd;
  fwd.unit_mask = identity;
  fwd.noisy_phase = identity;
  const fs::path out_dir = c.output_dir;
  fs::create_directories(out_dir);
  for (const auto& in : inputs) {
    const dsp::AudioClip noisy = read_wav(in);
    const auto result = model::model_forward(*net, noisy, fwd);
    const fs::path dst = out_dir / in.filename();
    write_wav(dst, result.audio);
    out << in.string() << " -> " << dst.string() << " (" << result.audio.size() << " samples)\n";
  }
  return kExitOk;
}

int cmd_enhance(const Common& common, const std::vector<std::string>& inputs, bool identity,
                std::ostream& out) {
  const RunConfig c = common.resolve();
  if (common.checkpoint.empty() && !identity)
    throw UsageError("enhance needs --checkpoint (or --identity)");
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      const auto found = wav_files(in);
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  if (files.empty()) throw UsageError("enhance: no input WAV files");
  std::set<std::string> names;
  for (const auto& f : files)
    if (!names.insert(f.filename().string()).second)
      throw std::runtime_error("enhance: two inputs share the output name " +
                               f.filename().string());
  if (c.precision == Precision::kF64)
    return enhance_all<double>(c, files, common.checkpoint, identity, out);
  return enhance_all<float>(c, files, common.checkpoint, identity, out);
}

int cmd_eval(const Common& common, const std::string& clean_dir, const std::string& enhanced_dir,
             std::ostream& out) {
  metrics::EvalReport report;
  const auto enhanced = wav_files(enhanced_dir);
  if (enhanced.empty()) throw std::runtime_error("eval: no WAV files in " + enhanced_dir);
  for (const auto& e : enhanced) {
    const fs::path clean = fs::path(clean_dir) / e.filename();
    if (!fs::exists(clean)) throw std::runtime_error("eval: no clean reference " + clean.string());
    report.add(e.filename().string(), read_wav(clean), read_wav(e));
  }
  report.write_table(out);
  if (!common.out_dir.empty()) {
    fs::create_directories(common.out_dir);
    std::ofstream csv(fs::path(common.out_dir) / "eval.csv");
    report.write_csv(csv);
  }
  return kExitOk;
}

int cmd_count(const Common& common, const std::string& prefix, std::ostream& out) {
  RunConfig c = common.resolve();
  model::ParamCount count;
  if (!common.checkpoint.empty()) {
    c.arch = model::arch_from_text(model::read_checkpoint(common.checkpoint).meta("arch"));
  }
  try {
    count = model::count_params(c.arch, prefix);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  out << std::left << std::setw(12) << "block" << std::right << std::setw(12) << "params" << '\n';
  for (const auto& [block, n] : count.blocks)
    out << std::left << std::setw(12) << block << std::right << std::setw(12) << n << '\n';
  out << std::left << std::setw(12) << "total" << std::right << std::setw(12) << count.total
      << '\n';
  return kExitOk;
}

int cmd_grad_check(const Common& common, std::size_t coords, double seconds, double step,
                   double threshold, bool verbose, std::ostream& out) {
  const RunConfig c = common.resolve();
  optim::ModelGradCheckOptions opts;
  opts.coords_per_tensor = coords;
  opts.seconds = seconds;
  opts.step = step;
  opts.seed = common.seed.value_or(42);
  const auto report = optim::model_gradient_check(c.arch, opts);
  const ndgrad::TensorCheck* worst = nullptr;
  for (const auto& t : report.tensors) {
    if (worst == nullptr || t.result.max_rel_error > worst->result.max_rel_error) worst = &t;
    if (verbose)
      out << std::left << std::setw(44) << t.name << std::right << std::scientific
          << std::setprecision(3) << t.result.max_rel_error << std::defaultfloat << "  n "
          << std::setw(3) << t.result.checked << std::scientific << "  analytic " << t.result.worst_analytic
          << "  numeric " << t.result.worst_numeric << std::defaultfloat << '\n';
  }
  const bool pass = report.max_rel_error < threshold;
  out << "checked " << report.checked << " coordinates in " << report.tensors.size()
      << " tensors (" << report.straddled << " redrawn at kinks); max relative error " << std::scientific << std::setprecision(3)
      << report.max_rel_error << std::defaultfloat;
  if (worst != nullptr) out << " (" << worst->name << ")";
  out << (pass ? "; PASS" : "; FAIL") << '\n';
  return pass ? kExitOk : kExitFailure;
}

struct VariantSummary {
  std::string name;
  std::size_t steps = 0;
  double first10 = 0.0;
  double early = 0.0;
  double last10 = 0.0;
  bool finite = true;
  bool monotone = true;
};

double mean_loss(const std::vector<optim::StepLog>& log, std::size_t from, std::size_t to) {
  to = std::min(to, log.size());
  if (from >= to) return 0.0;
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += log[i].total_loss;
  return s / static_cast<double>(to - from);
}

int cmd_ablate(const Common& common, const std::string& manifest, std::size_t steps,
               bool phase_arm, std::ostream& out, std::ostream& err) {
  RunConfig base = common.resolve();
  if (!manifest.empty()) base.manifest = manifest;
  if (steps == 0) throw UsageError("ablate: --steps must be positive");
  base.train.max_steps = steps;
  const optim::Dataset data = load_manifest(base, err);

  std::vector<model::ArchConfig> arms;
  for (auto norm : {model::NormKind::kGlobalLayer, model::NormKind::kBatch})
    for (auto act : {model::ActKind::kPrelu, model::ActKind::kRelu}) {
      model::ArchConfig a = base.arch;
      a.norm = norm;
      a.act = act;
      a.phase_act = model::PhaseAct::kPrelu;
      arms.push_back(a);
    }
  if (phase_arm) {
    model::ArchConfig a = base.arch;
    a.norm = model::NormKind::kGlobalLayer;
    a.act = model::ActKind::kPrelu;
    a.phase_act = model::PhaseAct::kRelu;
    arms.push_back(a);
  }

  const fs::path root = base.output_dir;
  std::vector<VariantSummary> rows;
  for (const auto& arch : arms) {
    RunConfig c = base;
    c.arch = arch;
    const std::string name = arch.variant_name();
    err << "== " << name << '\n';
    std::vector<optim::StepLog> log;
    if (c.precision == Precision::kF64)
      log = run_training<double>(c, data, "", root / name, err, false).log;
    else
      log = run_training<float>(c, data, "", root / name, err, false).log;
    VariantSummary s{name, log.size()};
    for (std::size_t i = 0; i < log.size(); ++i) {
      s.finite = s.finite && std::isfinite(log[i].total_loss);
      s.monotone = s.monotone && log[i].step == i + 1;
    }
    s.first10 = mean_loss(log, 0, 10);
    s.early = mean_loss(log, 0, std::max<std::size_t>(1, log.size() / 4));
    s.last10 = mean_loss(log, log.size() >= 10 ? log.size() - 10 : 0, log.size());
    rows.push_back(s);
  }

  std::ofstream csv(root / "summary.csv");
  csv << "variant,steps,first10_mean,first_quarter_mean,last10_mean,finite,monotone_steps\n";
  out << std::left << std::setw(26) << "variant" << std::right << std::setw(8) << "steps"
      << std::setw(14) << "first10" << std::setw(14) << "1st-quarter" << std::setw(14) << "last10"
      << '\n';
  bool ok = true;
  for (const auto& s : rows) {
    ok = ok && s.finite && s.monotone && s.steps == steps;
    csv << s.name << ',' << s.steps << ',' << std::setprecision(17) << s.first10 << ','
        << s.early << ',' << s.last10 << ',' << s.finite << ',' << s.monotone << '\n';
    out << std::left << std::setw(26) << s.name << std::right << std::setw(8) << s.steps
        << std::fixed << std::setprecision(5) << std::setw(14) << s.first10 << std::setw(14)
        << s.early << std::setw(14) << s.last10 << std::defaultfloat << '\n';
  }
  auto find = [&rows](const std::string& n) -> const VariantSummary* {
    for (const auto& r : rows)
      if (r.name == n) return &r;
    return nullptr;
  };
  out << "observations (not pass/fail at this scale):\n";
  for (const char* act : {"PReLU", "ReLU"}) {
    const auto* ln = find(std::string("SPA-LN-") + act);
    const auto* bn = find(std::string("SPA-BN-") + act);
    if (ln && bn)
      out << "  GLN vs BN (" << act << "), first-quarter mean loss: " << std::setprecision(5)
          << ln->early << " vs " << bn->early
          << (ln->early < bn->early ? "  -> GLN faster early" : "  -> GLN not faster early")
          << '\n';
  }
  if (const auto* relu = find("SPA-LN-PReLU-phaseReLU")) {
    const auto* ref = find("SPA-LN-PReLU");
    out << "  phase ReLU vs PReLU, last-10 mean loss: " << relu->last10 << " vs " << ref->last10
        << (relu->last10 > ref->last10 ? "  -> ReLU on phase degrades"
                                       : "  -> no degradation from ReLU on phase")
        << '\n';
  }
  out << "loss curves: " << root.string() << "/<variant>/loss.csv\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PHASEN-SPA speech enhancement", "phasen"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::uint64_t seed = 0;
  app.add_option("--config", common.config_path, "key=value config file");
  app.add_option("--set", common.sets, "override one config field (key=value)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--checkpoint", common.checkpoint, "checkpoint file");
  app.add_option("--out", common.out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train a model from a manifest");
  std::string manifest;
  train->add_option("--manifest", manifest, "TSV of noisy<TAB>clean paths");

  auto* enhance = app.add_subcommand("enhance", "denoise WAV files or directories");
  std::vector<std::string> inputs;
  bool identity = false;
  enhance->add_option("inputs", inputs, "WAV files or directories")->required();
  enhance->add_flag("--identity", identity, "unit mask and noisy phase (pipeline check)");

  auto* eval = app.add_subcommand("eval", "score enhanced WAVs against clean references");
  std::string clean_dir;
  std::string enhanced_dir;
  eval->add_option("clean_dir", clean_dir)->required();
  eval->add_option("enhanced_dir", enhanced_dir)->required();

  auto* count = app.add_subcommand("count-params", "learnable parameter counts per block");
  std::string prefix;
  count->add_option("--prefix", prefix, "dotted path prefix, e.g. tsb.0.spa.0");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of the full model");
  std::size_t coords = 20;
  double seconds = 0.2;
  double step = 1e-6;
  double threshold = 1e-4;
  bool verbose = false;
  grad->add_option("--coords", coords, "coordinates per tensor");
  grad->add_option("--seconds", seconds, "clip length");
  grad->add_option("--step", step, "base finite-difference step (adapted per coordinate over 0.01x to 100x)");
  grad->add_option("--threshold", threshold, "maximum relative error");
  grad->add_flag("--verbose", verbose, "per-tensor errors");

  auto* ablate = app.add_subcommand("ablate", "train the GLN/BN x PReLU/ReLU variants");
  std::size_t ablate_steps = 200;
  bool no_phase_arm = false;
  ablate->add_option("--manifest", manifest, "TSV of noisy<TAB>clean paths");
  ablate->add_option("--steps", ablate_steps, "training steps per variant");
  ablate->add_flag("--no-phase-arm", no_phase_arm, "skip the ReLU-on-phase run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (seed_opt->count() > 0) common.seed = seed;

  try {
    if (train->parsed()) return cmd_train(common, manifest, out, err);
    if (enhance->parsed()) return cmd_enhance(common, inputs, identity, out);
    if (eval->parsed()) return cmd_eval(common, clean_dir, enhanced_dir, out);
    if (count->parsed()) return cmd_count(common, prefix, out);
    if (grad->parsed())
      return cmd_grad_check(common, coords, seconds, step, threshold, verbose, out);
    if (ablate->parsed())
      return cmd_ablate(common, manifest, ablate_steps, !no_phase_arm, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace phasen::cli
