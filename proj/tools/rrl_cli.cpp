// rrl: data generation, pretraining, probing and diagnostics.
//
// Settings are resolved as built-in defaults, then RRL_THREADS for the thread
// count, then the --config file, then --set key=value pairs, then the named
// flags (--seed, --steps, --k, --epsilon). Every run writes the resolved
// settings next to its output so it can be replayed with --config.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/model/checkpoint.hpp"
#include "rrl/pipeline/gradient_suite.hpp"
#include "rrl/pipeline/pretrain.hpp"
#include "rrl/probe/probe.hpp"
#include "rrl/relation/relation.hpp"
#include "rrl/relation/sinkhorn_check.hpp"
#include "rrl/synth/synth_data.hpp"

namespace fs = std::filesystem;
using namespace rrl;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
};

int env_threads() {
  const char* text = std::getenv("RRL_THREADS");
  if (text == nullptr || *text == '\0') return 1;
  const long long n = io::parse_int(text);
  require(n >= 1, "RRL_THREADS must be a positive integer");
  return static_cast<int>(n);
}

// Applies config-file entries and then --set overrides; any key the table
// does not know is an error.
template <typename T>
void resolve(T& target, const OptionTable<T>& table, const Common& common) {
  KeyValues entries;
  if (!common.config.empty()) entries = read_key_values(common.config);
  for (const std::string& s : common.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, "--set expects key=value, got '" + s + "'");
    entries.emplace_back(io::trim(s.substr(0, eq)), io::trim(s.substr(eq + 1)));
  }
  for (const auto& [key, value] : entries) {
    require(table.apply(target, key, value), "unknown setting '" + key + "'");
  }
}

template <typename T>
void set_flag(T& target, const OptionTable<T>& table, const std::string& key, const auto& value) {
  if (!value) return;
  std::string text;
  if constexpr (std::is_floating_point_v<std::decay_t<decltype(*value)>>) {
    text = io::format_double(*value);
  } else {
    text = std::to_string(*value);
  }
  table.apply(target, key, text);
}

void write_echo(const fs::path& path, const std::string& command, const std::vector<std::string>& inputs,
                const std::string& settings) {
  std::string text = "# rrl " + command + "\n";
  for (const std::string& line : inputs) text += "# " + line + "\n";
  text += settings;
  io::write_file_atomic(path, text);
}

fs::path echo_path_for_file(const fs::path& out) { return fs::path(out.string() + ".config.txt"); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::vector<AuRegionSpec> load_regions(const std::string& path, int K) {
  std::vector<AuRegionSpec> regions = path.empty() ? default_au_regions(K) : read_au_regions(path);
  require(static_cast<int>(regions.size()) == K,
          "expected " + std::to_string(K) + " AU regions, got " + std::to_string(regions.size()));
  return regions;
}

void require_path(const std::string& path, const std::string& flag) {
  require(!path.empty(), flag + " is required");
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational representation learning on synthetic action units"};
  app.require_subcommand(1);
  app.allow_extras(false);

  auto add_common = [](CLI::App* cmd, Common& c, bool with_seed = true) {
    cmd->add_option("--config", c.config, "Settings file (key = value lines)");
    cmd->add_option("--set", c.sets, "Override a setting, key=value (repeatable)");
    if (with_seed) cmd->add_option("--seed", c.seed, "Random seed");
  };

  // gen-data
  Common gen_common;
  std::string gen_out;
  std::optional<long long> gen_k;
  auto* gen = app.add_subcommand("gen-data", "Generate subject-disjoint train and test shards");
  add_common(gen, gen_common);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--k", gen_k, "Number of action units (8 or 12)");

  // pretrain
  Common pre_common;
  std::string pre_out, pre_data, pre_relation, pre_regions;
  std::optional<long long> pre_steps, pre_k;
  std::optional<double> pre_eps;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  add_common(pre, pre_common);
  pre->add_option("--data", pre_data, "Training dataset directory")->required();
  pre->add_option("--out", pre_out, "Output directory")->required();
  pre->add_option("--relation", pre_relation, "Relation matrix CSV (default: from the dataset labels)");
  pre->add_option("--regions", pre_regions, "AU region CSV (default: built-in layout)");
  pre->add_option("--steps", pre_steps, "Optimizer steps");
  pre->add_option("--k", pre_k, "Number of action units");
  pre->add_option("--epsilon", pre_eps, "Sinkhorn entropic regularization");

  // probe
  Common probe_common;
  std::string probe_out, probe_data, probe_ckpt, probe_regions;
  bool probe_concat = false;
  auto* probe = app.add_subcommand("probe", "Train a linear probe on frozen features");
  add_common(probe, probe_common);
  probe->add_option("--checkpoint", probe_ckpt, "Checkpoint directory")->required();
  probe->add_option("--data", probe_data, "Labeled dataset directory")->required();
  probe->add_option("--out", probe_out, "Probe head file (JSON)")->required();
  probe->add_option("--regions", probe_regions, "AU region CSV (default: built-in layout)");
  probe->add_flag("--concat-local", probe_concat, "Append local features to the global one");

  // eval
  std::string eval_out, eval_data, eval_ckpt, eval_probe, eval_regions;
  auto* eval = app.add_subcommand("eval", "Score a probe on a labeled dataset");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--probe", eval_probe, "Probe head file")->required();
  eval->add_option("--data", eval_data, "Labeled dataset directory")->required();
  eval->add_option("--out", eval_out, "Report CSV")->required();
  eval->add_option("--regions", eval_regions, "AU region CSV (default: built-in layout)");

  // relmat
  std::string rel_labels, rel_out;
  auto* relmat = app.add_subcommand("relmat", "Dice relation matrix from a labels CSV");
  relmat->add_option("--labels", rel_labels, "Labels CSV")->required();
  relmat->add_option("--out", rel_out, "Output CSV")->required();

  // attmap
  std::string att_landmarks, att_regions, att_out;
  std::optional<long long> att_k;
  int att_limit = 4, att_scale = 4;
  auto* attmap = app.add_subcommand("attmap", "Write attention maps as PGM images");
  attmap->add_option("--landmarks", att_landmarks, "Landmarks CSV")->required();
  attmap->add_option("--out", att_out, "Output directory")->required();
  attmap->add_option("--regions", att_regions, "AU region CSV (default: built-in layout)");
  attmap->add_option("--k", att_k, "Number of action units for the built-in layout");
  attmap->add_option("--limit", att_limit, "Landmark rows to render")->check(CLI::NonNegativeNumber);
  attmap->add_option("--scale", att_scale, "Pixels per grid cell")->check(CLI::PositiveNumber);

  // sinkhorn-check
  std::optional<long long> sk_seed;
  int sk_k = 3, sk_trials = 50;
  double sk_eps = 0.01;
  std::string sk_out;
  auto* skcheck = app.add_subcommand("sinkhorn-check", "Compare Sinkhorn against the exact transport optimum");
  skcheck->add_option("--k", sk_k, "Problem size (2 to 4)");
  skcheck->add_option("--epsilon", sk_eps, "Entropic regularization");
  skcheck->add_option("--trials", sk_trials, "Random instances")->check(CLI::PositiveNumber);
  skcheck->add_option("--seed", sk_seed, "Random seed");
  skcheck->add_option("--out", sk_out, "Report CSV");

  // gradcheck
  std::optional<long long> gc_seed;
  int gc_seeds = 20;
  bool gc_no_composite = false;
  std::string gc_out;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  gradcheck->add_option("--seeds", gc_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "First seed");
  gradcheck->add_flag("--skip-composite", gc_no_composite, "Skip the encoder composite");
  gradcheck->add_option("--out", gc_out, "Report CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      GenDataConfig cfg;
      resolve(cfg, gen_data_options(), gen_common);
      set_flag(cfg, gen_data_options(), "seed", gen_common.seed);
      set_flag(cfg, gen_data_options(), "k", gen_k);
      const SynthSpec spec = cfg.resolve();
      const DatasetSplit split = generate_split(spec, cfg.train_subjects, cfg.test_subjects);
      const fs::path out(gen_out);
      write_dataset(out / "train", split.train);
      write_dataset(out / "test", split.test);
      write_au_regions(out / "au_regions.csv", spec.regions);
      write_relation_csv(out / "relation.csv", relation_from_labels(split.train.labels));
      write_echo(out / "config.txt", "gen-data", {}, gen_data_options().echo(cfg));
      std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test images to " << gen_out
                << "\n";
    } else if (*pre) {
      TrainConfig cfg;
      cfg.threads = env_threads();
      resolve(cfg, train_options(), pre_common);
      set_flag(cfg, train_options(), "seed", pre_common.seed);
      set_flag(cfg, train_options(), "steps", pre_steps);
      set_flag(cfg, train_options(), "k", pre_k);
      set_flag(cfg, train_options(), "epsilon", pre_eps);
      cfg.validate();
      require_path(pre_data, "--data");
      const Dataset data = read_dataset(pre_data);
      require(data.K() == cfg.model.K, "dataset has " + std::to_string(data.K()) + " AUs but k = " +
                                           std::to_string(cfg.model.K));
      const std::vector<AuRegionSpec> regions = load_regions(pre_regions, cfg.model.K);
      RelationMatrix relation;
      if (pre_relation.empty()) {
        relation = relation_from_labels(data.labels);
      } else {
        require_path(pre_relation, "--relation");
        relation = read_relation_csv(pre_relation);
      }
      const fs::path out(pre_out);
      fs::create_directories(out);
      const std::string settings = train_options().echo(cfg);
      std::vector<std::string> inputs{"data: " + pre_data};
      if (!pre_relation.empty()) inputs.push_back("relation: " + pre_relation);
      if (!pre_regions.empty()) inputs.push_back("regions: " + pre_regions);
      write_echo(out / "config.txt", "pretrain", inputs, settings);

      const long long report_every = std::max<long long>(1, cfg.steps / 20);
      const PretrainResult result =
          pretrain(cfg, data, relation, regions, [&](const LossRecord& r, const DualNetworkState& state) {
            const long long done = r.step + 1;
            if (done % report_every == 0 || done == cfg.steps) {
              std::cout << "step " << done << "/" << cfg.steps << "  L_all " << io::format_double(r.l_all) << "\n"
                        << std::flush;
            }
            if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps) {
              save_checkpoint(out / "checkpoints" / ("step_" + std::to_string(done)), state, done, settings);
            }
          });
      save_checkpoint(out / "checkpoint", result.state, cfg.steps, settings);
      write_loss_log(out / "loss_log.csv", result.log);
      std::cout << "checkpoint written to " << (out / "checkpoint").string() << "\n";
    } else if (*probe) {
      ProbeConfig cfg;
      cfg.threads = env_threads();
      resolve(cfg, probe_options(), probe_common);
      set_flag(cfg, probe_options(), "probe_seed", probe_common.seed);
      if (probe_concat) cfg.concat_local = true;
      cfg.validate();
      require_path(probe_ckpt, "--checkpoint");
      require_path(probe_data, "--data");
      const Checkpoint ckpt = load_checkpoint(probe_ckpt);
      const Dataset data = read_dataset(probe_data);
      require(data.K() == ckpt.state.config.K, "dataset and checkpoint disagree on the number of AUs");
      const auto regions = load_regions(probe_regions, data.K());
      const ProbeHead head = train_probe(ckpt.state, data, regions, cfg);
      ensure_parent(probe_out);
      save_probe_head(probe_out, head);
      std::vector<std::string> inputs{"checkpoint: " + probe_ckpt, "data: " + probe_data};
      if (!probe_regions.empty()) inputs.push_back("regions: " + probe_regions);
      write_echo(echo_path_for_file(probe_out), "probe", inputs, probe_options().echo(cfg));
      const Eigen::MatrixXd features = extract_features(ckpt.state.config, ckpt.state.theta, data, regions,
                                                        cfg.concat_local, cfg.threads);
      std::cout << "train F1 " << io::format_double(evaluate(head, features, data.labels).average_percent()) << "\n";
    } else if (*eval) {
      require_path(eval_ckpt, "--checkpoint");
      require_path(eval_probe, "--probe");
      require_path(eval_data, "--data");
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const ProbeHead head = load_probe_head(eval_probe);
      require(head.encoder_hash == parameter_hash(ckpt.state.theta),
              "probe was trained on a different encoder");
      const Dataset data = read_dataset(eval_data);
      const auto regions = load_regions(eval_regions, data.K());
      const Eigen::MatrixXd features =
          extract_features(ckpt.state.config, ckpt.state.theta, data, regions, head.concat_local, env_threads());
      const EvalReport report = evaluate(head, features, data.labels);
      ensure_parent(eval_out);
      write_eval_report(eval_out, report);
      write_echo(echo_path_for_file(eval_out), "eval",
                 {"checkpoint: " + eval_ckpt, "probe: " + eval_probe, "data: " + eval_data}, "");
      std::cout << "average F1 " << io::format_double(report.average_percent()) << "\n";
    } else if (*relmat) {
      require_path(rel_labels, "--labels");
      const RelationMatrix relation = relation_from_labels(read_labels_csv(rel_labels));
      ensure_parent(rel_out);
      write_relation_csv(rel_out, relation);
      write_echo(echo_path_for_file(rel_out), "relmat", {"labels: " + rel_labels}, "");
    } else if (*attmap) {
      require_path(att_landmarks, "--landmarks");
      const std::vector<LandmarkSet> sets = read_landmarks_csv(att_landmarks);
      std::vector<AuRegionSpec> regions;
      if (att_regions.empty()) {
        regions = default_au_regions(static_cast<int>(att_k.value_or(8)));
      } else {
        require_path(att_regions, "--regions");
        regions = read_au_regions(att_regions);
      }
      const fs::path out(att_out);
      fs::create_directories(out);
      const auto rows = std::min<std::size_t>(sets.size(), static_cast<std::size_t>(att_limit));
      for (std::size_t i = 0; i < rows; ++i) {
        const AttentionMap maps = build_attention(sets[i], regions);
        for (int k = 0; k < maps.K(); ++k) {
          const Eigen::MatrixXd& m = maps.maps[static_cast<std::size_t>(k)];
          Image big(m.rows() * att_scale, m.cols() * att_scale);
          for (Eigen::Index r = 0; r < big.rows(); ++r) {
            for (Eigen::Index c = 0; c < big.cols(); ++c) big(r, c) = m(r / att_scale, c / att_scale);
          }
          write_pgm(out / ("row" + std::to_string(i) + "_au" + std::to_string(k) + ".pgm"), big);
        }
      }
      write_echo(out / "config.txt", "attmap",
                 {"landmarks: " + att_landmarks, "regions: " + (att_regions.empty() ? "built-in" : att_regions)},
                 "limit = " + std::to_string(att_limit) + "\nscale = " + std::to_string(att_scale) + "\n");
      std::cout << "wrote " << rows << " attention map sets to " << att_out << "\n";
    } else if (*skcheck) {
      const auto seed = static_cast<std::uint64_t>(sk_seed.value_or(0));
      const SinkhornCheckReport report = run_sinkhorn_check(sk_k, sk_eps, sk_trials, seed);
      int passed = 0;
      double worst = 0.0;
      for (const SinkhornTrial& t : report.trials) {
        passed += t.passed ? 1 : 0;
        worst = std::max(worst, t.relative_gap);
      }
      if (!sk_out.empty()) {
        ensure_parent(sk_out);
        io::write_file_atomic(sk_out, report.csv());
        write_echo(echo_path_for_file(sk_out), "sinkhorn-check", {},
                   "k = " + std::to_string(sk_k) + "\nepsilon = " + io::format_double(sk_eps) +
                       "\ntrials = " + std::to_string(sk_trials) + "\nseed = " + std::to_string(seed) + "\n");
      }
      std::cout << passed << "/" << report.trials.size() << " trials within tolerance, worst relative gap "
                << io::format_double(worst) << "\n";
      return report.all_passed() ? 0 : 1;
    } else if (*gradcheck) {
      const auto seed = static_cast<std::uint64_t>(gc_seed.value_or(0));
      const GradientSuiteReport report = run_gradient_suite(gc_seeds, seed, !gc_no_composite);
      if (!gc_out.empty()) {
        ensure_parent(gc_out);
        io::write_file_atomic(gc_out, report.csv());
        write_echo(echo_path_for_file(gc_out), "gradcheck", {},
                   "seeds = " + std::to_string(gc_seeds) + "\nseed = " + std::to_string(seed) + "\n");
      }
      for (const char* name : {"l_glo", "l_loc", "l_corr", "l_all", "encoder_composite"}) {
        std::cout << name << " worst relative error " << io::format_double(report.worst(name)) << "\n";
      }
      return report.all_passed() ? 0 : 1;
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
