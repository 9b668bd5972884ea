// Copyright 2026 The jna Authors
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

// Experiment CLI: generate synthetic tasks, train/evaluate the fusion
// heads, run (head x seed) experiment matrices, export attention traces,
// and run the finite-difference gradient-check suites.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jna/jna.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_csv(s)) out.push_back(std::stoul(item));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_csv(s)) out.push_back(std::stoull(item));
  return out;
}

struct TaskArgs {
  jna::SyntheticTaskSpec spec;

  void attach(CLI::App* cmd) {
    cmd->add_option("--classes", spec.num_classes, "Number of classes");
    cmd->add_option("--dim-s", spec.dim_s, "Spatial-stream feature dim");
    cmd->add_option("--dim-t", spec.dim_t, "Temporal-stream feature dim");
    cmd->add_option("--seq-len", spec.seq_len, "Frames per sequence");
    cmd->add_option("--salient", spec.salient_count, "Salient frames per sequence");
    cmd->add_option("--sigma", spec.noise_sigma, "Noise standard deviation");
    cmd->add_option("--rho", spec.cross_stream_rho, "Cross-stream salient-position correlation");
    cmd->add_option("--train-size", spec.train_size, "Training pairs");
    cmd->add_option("--test-size", spec.test_size, "Test pairs");
    cmd->add_option("--task-seed", spec.seed, "Generator seed");
  }
};

struct ScheduleArgs {
  std::string preset = "desk";
  double base_lr = -1.0;
  std::string milestones;
  double decay = -1.0;
  long long iters = -1;
  double momentum = -1.0;
  long long batch = -1;
  long long pretrain_iters = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Schedule preset: desk, paper-joint, paper-cnn")
        ->check(CLI::IsMember({"desk", "paper-joint", "paper-cnn"}));
    cmd->add_option("--base-lr", base_lr, "Override base learning rate");
    cmd->add_option("--milestones", milestones, "Override decay milestones, e.g. 950,1725,2300");
    cmd->add_option("--decay", decay, "Override decay factor");
    cmd->add_option("--iters", iters, "Override max iterations");
    cmd->add_option("--momentum", momentum, "Override SGD momentum");
    cmd->add_option("--batch", batch, "Override batch size");
    cmd->add_option("--pretrain-iters", pretrain_iters,
                    "Per-branch pretraining iterations (0 disables)");
  }

  jna::TrainSchedule resolve_joint() const {
    jna::TrainSchedule s;
    if (preset == "paper-joint")
      s = jna::TrainSchedule::paper_joint();
    else if (preset == "paper-cnn")
      s = jna::TrainSchedule::paper_cnn();
    else
      s = jna::TrainSchedule::desk_default();
    if (base_lr > 0) s.base_lr = base_lr;
    if (!milestones.empty()) s.milestones = parse_size_list(milestones);
    if (decay > 0) s.decay_factor = decay;
    if (iters >= 0) s.max_iters = static_cast<std::size_t>(iters);
    if (momentum >= 0) s.momentum = momentum;
    if (batch > 0) s.batch_size = static_cast<std::size_t>(batch);
    s.validate();
    return s;
  }

  jna::TrainSchedule resolve_pretrain(const jna::TrainSchedule& joint) const {
    jna::TrainSchedule s = jna::TrainSchedule::desk_pretrain();
    s.momentum = joint.momentum;
    s.batch_size = joint.batch_size;
    if (pretrain_iters >= 0) {
      s.max_iters = static_cast<std::size_t>(pretrain_iters);
      s.milestones.clear();
      if (s.max_iters > 4) s.milestones = {s.max_iters * 3 / 4};
    }
    if (s.max_iters > 0) s.validate();
    return s;
  }
};

struct ModelArgs {
  std::string hidden = "32";
  std::size_t attn_dim = 32;
  std::size_t spatial_k = 2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--hidden", hidden, "GRU layer sizes, e.g. 32 or 32,32");
    cmd->add_option("--attn-dim", attn_dim, "Attention dimension");
    cmd->add_option("--spatial-k", spatial_k, "K for the spatial_attention head");
  }

  jna::ModelSpec resolve(jna::HeadType head, const jna::SyntheticTaskSpec& task) const {
    jna::ModelSpec spec;
    spec.head = head;
    spec.dim_s = task.dim_s;
    spec.dim_t = task.dim_t;
    spec.gru_layers = parse_size_list(hidden);
    spec.attn_dim = attn_dim;
    spec.num_classes = task.num_classes;
    spec.spatial_k = head == jna::HeadType::spatial_attention ? spatial_k : 0;
    spec.validate();
    return spec;
  }
};

struct WindowArgs {
  jna::WindowSpec window{16, 1, true};

  void attach(CLI::App* cmd) {
    cmd->add_option("--window-len", window.window_len, "Frames per training window");
    cmd->add_option("--window-stride", window.stride, "Stride between window frames");
    cmd->add_flag_callback(
        "--strict-windows", [this] { window.allow_short = false; },
        "Fail on sequences shorter than the window span instead of shrinking");
  }
};

const std::vector<jna::LabeledSequencePair>& pick_split(const jna::SyntheticDataset& ds,
                                                        const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "test") return ds.test;
  throw jna::ConfigError("unknown split '" + split + "' (use train or test)");
}

int cmd_generate(const TaskArgs& task, const std::string& out_path) {
  jna::SyntheticDataset ds = jna::generate_task(task.spec);
  jna::save_dataset(out_path, ds);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test pairs to "
            << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& head_name, const ScheduleArgs& sched,
              const ModelArgs& margs, const WindowArgs& wargs, std::uint64_t seed,
              const std::string& model_out, const std::string& report_out) {
  jna::SyntheticDataset ds = jna::load_dataset(data_path);
  jna::HeadType head = jna::head_from_string(head_name);
  jna::ModelSpec spec = margs.resolve(head, ds.spec);

  jna::Rng rng(seed);
  jna::Model model = jna::build_model(spec, rng);

  jna::TrainOptions opts;
  opts.joint = sched.resolve_joint();
  opts.pretrain = sched.resolve_pretrain(opts.joint);
  opts.window = wargs.window;
  opts.seed = seed;

  jna::TrainingReport report = jna::train(model, ds.train, opts);
  jna::EvalMetrics train_m = jna::evaluate_detailed(model, ds.train, opts.window);
  jna::EvalMetrics test_m = jna::evaluate_detailed(model, ds.test, opts.window);

  std::cout << "head=" << head_name << " seed=" << seed << "\n"
            << "final loss:      " << report.final_loss << "\n"
            << "train accuracy:  " << train_m.accuracy << " (spatial " << train_m.accuracy_branch_s
            << ", temporal " << train_m.accuracy_branch_t << ")\n"
            << "test accuracy:   " << test_m.accuracy << " (spatial " << test_m.accuracy_branch_s
            << ", temporal " << test_m.accuracy_branch_t << ")\n";
  const auto& dom = report.dominance_samples.back();
  std::cout << "dominance ratio: " << dom.ratio << " (|g_s|=" << dom.grad_norm_s
            << ", |g_t|=" << dom.grad_norm_t << ")\n";

  if (!model_out.empty()) {
    jna::save_model(model_out, model);
    std::cout << "checkpoint: " << model_out << "\n";
  }
  if (!report_out.empty()) {
    nlohmann::json j = report.to_json();
    j["train_accuracy"] = train_m.accuracy;
    j["test_accuracy"] = test_m.accuracy;
    std::ofstream out(report_out);
    if (!out) throw std::runtime_error("cannot open '" + report_out + "' for writing");
    out << j.dump(2) << "\n";
    std::cout << "report: " << report_out << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& split,
             const WindowArgs& wargs) {
  jna::Model model = jna::load_model(model_path);
  jna::SyntheticDataset ds = jna::load_dataset(data_path);
  const auto& pairs = pick_split(ds, split);
  jna::EvalMetrics m = jna::evaluate_detailed(model, pairs, wargs.window);
  std::cout << "pairs:            " << pairs.size() << " (" << split << ")\n"
            << "fused accuracy:   " << m.accuracy << "\n"
            << "spatial branch:   " << m.accuracy_branch_s << "\n"
            << "temporal branch:  " << m.accuracy_branch_t << "\n";
  return 0;
}

int cmd_matrix(const TaskArgs& task, const ScheduleArgs& sched, const ModelArgs& margs,
               const WindowArgs& wargs, const std::string& heads_csv, const std::string& seeds_csv,
               const std::string& out_csv, const std::string& out_table, std::size_t trace_samples) {
  jna::ExperimentOptions opts;
  opts.task = task.spec;
  opts.heads.clear();
  for (const auto& name : split_csv(heads_csv)) opts.heads.push_back(jna::head_from_string(name));
  opts.seeds = parse_seed_list(seeds_csv);
  if (opts.heads.empty() || opts.seeds.empty())
    throw jna::ConfigError("matrix: need non-empty --heads and --seeds");
  opts.model = margs.resolve(opts.heads.front(), task.spec);
  if (opts.model.spatial_k == 0) opts.model.spatial_k = margs.spatial_k;
  opts.train_opts.joint = sched.resolve_joint();
  opts.train_opts.pretrain = sched.resolve_pretrain(opts.train_opts.joint);
  opts.train_opts.window = wargs.window;
  opts.trace_samples = trace_samples;

  auto results = jna::run_experiment_matrix(opts, &std::cerr);
  std::string table = jna::format_results_table(results);
  jna::OrderingFlags flags = jna::evaluate_orderings(results);
  if (flags.evaluated) table += "\n" + jna::format_ordering_flags(flags);
  std::cout << table;
  if (!out_csv.empty()) {
    jna::write_results_csv(out_csv, results);
    std::cerr << "csv: " << out_csv << "\n";
  }
  if (!out_table.empty()) {
    std::ofstream out(out_table);
    if (!out) throw std::runtime_error("cannot open '" + out_table + "' for writing");
    out << table;
    std::cerr << "table: " << out_table << "\n";
  }
  return 0;
}

int cmd_trace(const std::string& model_path, const std::string& data_path, const std::string& split,
              std::size_t index, const std::string& out_path) {
  jna::Model model = jna::load_model(model_path);
  if (!jna::head_has_trace(model.spec.head))
    throw jna::ConfigError("head '" + std::string(jna::to_string(model.spec.head)) +
                           "' has no attention trace");
  jna::SyntheticDataset ds = jna::load_dataset(data_path);
  const auto& pairs = pick_split(ds, split);
  if (index >= pairs.size())
    throw std::invalid_argument("trace: index " + std::to_string(index) + " out of range (" +
                                std::to_string(pairs.size()) + " pairs)");
  jna::AttentionTrace trace;
  jna::model_forward(model, pairs[index].seq_s, pairs[index].seq_t, &trace);
  jna::export_trace(trace, out_path, index);
  std::cout << "trace (" << trace.mechanism << ") for " << split << "[" << index << "] -> "
            << out_path << "\n";
  if (model.spec.head == jna::HeadType::jna) {
    jna::GateConcentration gc = jna::gate_concentration(trace);
    std::cout << "gate entropy: alpha " << gc.entropy_alpha << ", beta " << gc.entropy_beta
              << ", effective support " << gc.effective_support << "\n";
    std::cout << "salient recovery: "
              << jna::salient_recovery(trace, pairs[index].salient_mask) << "\n";
  }
  return 0;
}

int cmd_gradcheck(int seeds) {
  auto results = jna::run_all_gradient_checks(seeds);
  bool all_pass = true;
  std::printf("%-22s %14s %10s %6s\n", "suite", "max_rel_err", "tolerance", "pass");
  for (const auto& r : results) {
    std::printf("%-22s %14.3e %10.0e %6s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.pass() ? "yes" : "NO");
    all_pass = all_pass && r.pass();
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"two-stream sequence fusion with cross-stream temporal attention"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic two-stream dataset");
  TaskArgs gen_task;
  gen_task.attach(gen);
  std::string gen_out = "dataset.json";
  gen->add_option("--out", gen_out, "Output dataset file");

  // train
  auto* tr = app.add_subcommand("train", "Train one model on a dataset file");
  std::string tr_data, tr_head = "jna", tr_model_out = "model.json", tr_report_out;
  std::uint64_t tr_seed = 1;
  tr->add_option("--data", tr_data, "Dataset file from `generate`")->required();
  tr->add_option("--head", tr_head,
                 "Head: separate_streams, fc_fusion, branch_selection, branch_selection_l2, "
                 "spatial_attention, jna");
  tr->add_option("--seed", tr_seed, "Training / init seed");
  tr->add_option("--out", tr_model_out, "Model checkpoint path ('' to skip)");
  tr->add_option("--report", tr_report_out, "Training report JSON path");
  ScheduleArgs tr_sched;
  tr_sched.attach(tr);
  ModelArgs tr_model;
  tr_model.attach(tr);
  WindowArgs tr_window;
  tr_window.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  std::string ev_model, ev_data, ev_split = "test";
  ev->add_option("--model", ev_model, "Model checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();
  ev->add_option("--split", ev_split, "train or test");
  WindowArgs ev_window;
  ev_window.attach(ev);

  // matrix
  auto* mx = app.add_subcommand("matrix", "Run a (head x seed) experiment grid");
  TaskArgs mx_task;
  mx_task.attach(mx);
  ScheduleArgs mx_sched;
  mx_sched.attach(mx);
  ModelArgs mx_model;
  mx_model.attach(mx);
  WindowArgs mx_window;
  mx_window.attach(mx);
  std::string mx_heads = "separate_streams,fc_fusion,jna";
  std::string mx_seeds = "1,2,3,4,5";
  std::string mx_csv, mx_table;
  std::size_t mx_trace_samples = 32;
  mx->add_option("--heads", mx_heads, "Comma-separated head list");
  mx->add_option("--seeds", mx_seeds, "Comma-separated seed list");
  mx->add_option("--out-csv", mx_csv, "Results CSV path");
  mx->add_option("--out-table", mx_table, "Results text-table path");
  mx->add_option("--trace-samples", mx_trace_samples, "Test pairs sampled for gate stats");

  // trace
  auto* tc = app.add_subcommand("trace", "Export the attention trace of one sequence");
  std::string tc_model, tc_data, tc_split = "test", tc_out = "trace.csv";
  std::size_t tc_index = 0;
  tc->add_option("--model", tc_model, "Model checkpoint")->required();
  tc->add_option("--data", tc_data, "Dataset file")->required();
  tc->add_option("--split", tc_split, "train or test");
  tc->add_option("--index", tc_index, "Sequence index within the split");
  tc->add_option("--out", tc_out, "Trace CSV path");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suites");
  int gc_seeds = 20;
  gc->add_option("--seeds", gc_seeds, "Random instances per suite");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(gen_task, gen_out);
    if (tr->parsed())
      return cmd_train(tr_data, tr_head, tr_sched, tr_model, tr_window, tr_seed, tr_model_out,
                       tr_report_out);
    if (ev->parsed()) return cmd_eval(ev_model, ev_data, ev_split, ev_window);
    if (mx->parsed())
      return cmd_matrix(mx_task, mx_sched, mx_model, mx_window, mx_heads, mx_seeds, mx_csv,
                        mx_table, mx_trace_samples);
    if (tc->parsed()) return cmd_trace(tc_model, tc_data, tc_split, tc_index, tc_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int main(int argc, char** argv) { return cli_main(argc, argv); }
