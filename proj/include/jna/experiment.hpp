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

/// Experiment harness: runs a (head x seed) matrix on a synthetic task with
/// paired data per seed, measures salient-frame recovery and gate
/// concentration, and exports attention traces as plot-ready CSV.

#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "jna/attention.hpp"
#include "jna/model.hpp"
#include "jna/synthetic.hpp"
#include "jna/train.hpp"

namespace jna {

/// Fraction of gate mass that lands on ground-truth salient frames, averaged
/// over all queries and over the alpha and beta sides. A uniform gate scores
/// salient_count / T.
inline double salient_recovery(const AttentionTrace& trace, const SalientMask& mask) {
  const Matrix& a = trace.alpha;
  const Matrix& b = trace.beta;
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw std::invalid_argument("salient_recovery: expected square T x T gate matrices");
  const std::size_t T = a.rows();
  if (mask.size() != T)
    throw std::invalid_argument("salient_recovery: mask length " + std::to_string(mask.size()) +
                                " vs trace T " + std::to_string(T));

  double mass_alpha = 0.0;
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i)
      if (mask[i]) mass_alpha += a(i, j);
  double mass_beta = 0.0;
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      if (mask[j]) mass_beta += b(i, j);
  const double dT = static_cast<double>(T);
  return 0.5 * (mass_alpha / dT + mass_beta / dT);
}

// ---------------------------------------------------------------------------
// trace export
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string summary_path_for(const std::string& path) {
  auto dotpos = path.rfind('.');
  if (dotpos == std::string::npos) return path + "_summary";
  return path.substr(0, dotpos) + "_summary" + path.substr(dotpos);
}

}  // namespace detail

/// Writes the trace as long-format CSV (sequence_id, mechanism, matrix, i, j,
/// value) plus a per-frame summary file alongside it: the mean pre-softmax
/// score of each frame over all queries, with frames whose mean is negative
/// flagged.
inline void export_trace(const AttentionTrace& trace, const std::string& path,
                         std::size_t sequence_id = 0) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "sequence_id,mechanism,matrix,i,j,value\n";
  auto dump = [&](const char* name, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        out << sequence_id << ',' << trace.mechanism << ',' << name << ',' << i << ',' << j << ','
            << detail::fmt_full(m(i, j)) << '\n';
  };
  dump("e", trace.e);
  dump("f", trace.f);
  dump("alpha", trace.alpha);
  dump("beta", trace.beta);

  std::ofstream sum(detail::summary_path_for(path));
  if (!sum) throw std::runtime_error("cannot open summary file for '" + path + "'");
  sum << "sequence_id,mechanism,matrix,frame,mean_score,negative\n";
  auto summarize = [&](const char* name, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) mean += m(i, j);
      mean /= static_cast<double>(m.cols());
      sum << sequence_id << ',' << trace.mechanism << ',' << name << ',' << i << ','
          << detail::fmt_full(mean) << ',' << (mean < 0.0 ? 1 : 0) << '\n';
    }
  };
  if (!trace.e.empty()) summarize("e", trace.e);
  if (!trace.f.empty()) summarize("f", trace.f);
}

/// Reads back a trace CSV written by export_trace (round-trip checks).
inline AttentionTrace import_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file '" + path + "'");

  struct Cell {
    std::size_t i, j;
    double v;
  };
  std::map<std::string, std::vector<Cell>> cells;
  AttentionTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string seq_id, mech, name, si, sj, sv;
    std::getline(ss, seq_id, ',');
    std::getline(ss, mech, ',');
    std::getline(ss, name, ',');
    std::getline(ss, si, ',');
    std::getline(ss, sj, ',');
    std::getline(ss, sv, ',');
    trace.mechanism = mech;
    cells[name].push_back({std::stoul(si), std::stoul(sj), std::stod(sv)});
  }
  auto build = [&](const char* name) {
    auto it = cells.find(name);
    if (it == cells.end()) return Matrix{};
    std::size_t rows = 0, cols = 0;
    for (const auto& c : it->second) {
      rows = std::max(rows, c.i + 1);
      cols = std::max(cols, c.j + 1);
    }
    Matrix m(rows, cols);
    for (const auto& c : it->second) m(c.i, c.j) = c.v;
    return m;
  };
  trace.e = build("e");
  trace.f = build("f");
  trace.alpha = build("alpha");
  trace.beta = build("beta");
  return trace;
}

// ---------------------------------------------------------------------------
// experiment matrix
// ---------------------------------------------------------------------------

struct ExperimentOptions {
  SyntheticTaskSpec task;  // seed is overridden per matrix seed
  ModelSpec model;         // head is overridden per cell
  TrainOptions train_opts; // seed is overridden per matrix seed
  std::vector<HeadType> heads = {HeadType::separate_streams, HeadType::fc_fusion, HeadType::jna};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Number of test pairs sampled for gate-concentration / saliency stats.
  std::size_t trace_samples = 32;
};

struct ExperimentResult {
  HeadType head = HeadType::separate_streams;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double accuracy_branch_s = 0.0;
  double accuracy_branch_t = 0.0;
  double dominance_ratio = 1.0;
  double grad_norm_s = 0.0;
  double grad_norm_t = 0.0;
  std::optional<double> gate_entropy;       // mean of alpha/beta entropies (jna)
  std::optional<double> effective_support;  // mean exp(entropy) (jna)
  std::optional<double> salient_recovery;   // jna
  double wall_seconds = 0.0;                // excluded from the canonical tables
};

/// Trains one model per (head, seed) cell. All heads within a seed train on
/// bitwise-identical generated data, so comparisons are paired.
inline std::vector<ExperimentResult> run_experiment_matrix(const ExperimentOptions& opts,
                                                           std::ostream* log = nullptr) {
  if (opts.heads.empty() || opts.seeds.empty())
    throw std::invalid_argument("run_experiment_matrix: need at least one head and one seed");

  std::vector<SyntheticDataset> datasets;
  datasets.reserve(opts.seeds.size());
  for (std::uint64_t seed : opts.seeds) {
    SyntheticTaskSpec task = opts.task;
    task.seed = seed;
    datasets.push_back(generate_task(task));
  }

  std::vector<ExperimentResult> results;
  for (HeadType head : opts.heads) {
    for (std::size_t si = 0; si < opts.seeds.size(); ++si) {
      const std::uint64_t seed = opts.seeds[si];
      const SyntheticDataset& ds = datasets[si];
      auto t0 = std::chrono::steady_clock::now();

      ModelSpec mspec = opts.model;
      mspec.head = head;
      Rng mrng(seed);
      Model model = build_model(mspec, mrng);

      TrainOptions topts = opts.train_opts;
      topts.seed = seed;
      TrainingReport report = train(model, ds.train, topts);

      ExperimentResult r;
      r.head = head;
      r.seed = seed;
      EvalMetrics em = evaluate_detailed(model, ds.test, topts.window);
      r.accuracy = em.accuracy;
      r.accuracy_branch_s = em.accuracy_branch_s;
      r.accuracy_branch_t = em.accuracy_branch_t;
      const DominanceSample& dom = report.dominance_samples.back();
      r.dominance_ratio = dom.ratio;
      r.grad_norm_s = dom.grad_norm_s;
      r.grad_norm_t = dom.grad_norm_t;

      if (head == HeadType::jna) {
        std::size_t n = std::min<std::size_t>(opts.trace_samples, ds.test.size());
        double entropy = 0.0, support = 0.0, recovery = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          AttentionTrace trace;
          model_forward(model, ds.test[i].seq_s, ds.test[i].seq_t, &trace);
          GateConcentration gc = gate_concentration(trace);
          entropy += 0.5 * (gc.entropy_alpha + gc.entropy_beta);
          support += gc.effective_support;
          recovery += salient_recovery(trace, ds.test[i].salient_mask);
        }
        r.gate_entropy = entropy / static_cast<double>(n);
        r.effective_support = support / static_cast<double>(n);
        r.salient_recovery = recovery / static_cast<double>(n);
      }

      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (log)
        *log << "[matrix] head=" << to_string(head) << " seed=" << seed << " acc=" << r.accuracy
             << " dom=" << r.dominance_ratio << " (" << r.wall_seconds << "s)\n";
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// result tables. Wall-clock time is deliberately left out so identical
// configs produce byte-identical files.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_fixed(double v, int prec = 4) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int prec = 4) {
  return v ? fmt_fixed(*v, prec) : std::string("-");
}

}  // namespace detail

/// Mean of one field over a head's rows; NaN when the head is absent.
inline double mean_over_head(const std::vector<ExperimentResult>& results, HeadType head,
                             double ExperimentResult::* field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : results)
    if (r.head == head) {
      sum += r.*field;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

struct OrderingFlags {
  bool evaluated = false;
  bool accuracy_holds = false;   // mean jna accuracy >= mean average-fusion accuracy
  bool dominance_holds = false;  // mean fc dominance ratio > mean jna dominance ratio
  double acc_jna = 0.0, acc_avg = 0.0, dom_fc = 0.0, dom_jna = 0.0;
};

/// Expected relative orderings between the joint head and its baselines.
/// Only meaningful when the matrix contains jna, separate_streams and
/// fc_fusion rows; failures are reported, never hidden.
inline OrderingFlags evaluate_orderings(const std::vector<ExperimentResult>& results) {
  OrderingFlags f;
  f.acc_jna = mean_over_head(results, HeadType::jna, &ExperimentResult::accuracy);
  f.acc_avg = mean_over_head(results, HeadType::separate_streams, &ExperimentResult::accuracy);
  f.dom_fc = mean_over_head(results, HeadType::fc_fusion, &ExperimentResult::dominance_ratio);
  f.dom_jna = mean_over_head(results, HeadType::jna, &ExperimentResult::dominance_ratio);
  f.evaluated = std::isfinite(f.acc_jna) && std::isfinite(f.acc_avg) && std::isfinite(f.dom_fc) &&
                std::isfinite(f.dom_jna);
  f.accuracy_holds = f.acc_jna >= f.acc_avg;
  f.dominance_holds = f.dom_fc > f.dom_jna;
  return f;
}

inline std::string format_ordering_flags(const OrderingFlags& f) {
  if (!f.evaluated) return {};
  std::ostringstream out;
  out << "orderings over paired seeds:\n";
  out << "  mean fused accuracy: jna " << detail::fmt_fixed(f.acc_jna) << " vs average fusion "
      << detail::fmt_fixed(f.acc_avg) << " -- "
      << (f.accuracy_holds ? "HOLDS" : "FAILED (flagged)") << "\n";
  out << "  mean dominance ratio: fc_fusion " << detail::fmt_fixed(f.dom_fc, 3) << " vs jna "
      << detail::fmt_fixed(f.dom_jna, 3) << " -- "
      << (f.dominance_holds ? "HOLDS" : "FAILED (flagged)") << "\n";
  return out.str();
}

inline std::string results_to_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream out;
  out << "head,seed,accuracy,accuracy_branch_s,accuracy_branch_t,dominance_ratio,"
         "gate_entropy,effective_support,salient_recovery\n";
  for (const auto& r : results) {
    out << to_string(r.head) << ',' << r.seed << ',' << detail::fmt_fixed(r.accuracy, 6) << ','
        << detail::fmt_fixed(r.accuracy_branch_s, 6) << ','
        << detail::fmt_fixed(r.accuracy_branch_t, 6) << ','
        << detail::fmt_fixed(r.dominance_ratio, 6) << ','
        << (r.gate_entropy ? detail::fmt_fixed(*r.gate_entropy, 6) : "") << ','
        << (r.effective_support ? detail::fmt_fixed(*r.effective_support, 6) : "") << ','
        << (r.salient_recovery ? detail::fmt_fixed(*r.salient_recovery, 6) : "") << '\n';
  }
  return out.str();
}

inline void write_results_csv(const std::string& path, const std::vector<ExperimentResult>& results) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << results_to_csv(results);
}

/// Per-seed rows plus a mean row per head, laid out like the fusion
/// comparison tables: per-branch accuracies next to the fused one.
inline std::string format_results_table(const std::vector<ExperimentResult>& results) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-22s %6s %9s %9s %9s %10s %8s %9s\n", "head", "seed", "spatial",
                "temporal", "fused", "dom_ratio", "gate_H", "saliency");
  out << buf;
  out << std::string(88, '-') << '\n';

  std::vector<HeadType> head_order;
  for (const auto& r : results)
    if (std::find(head_order.begin(), head_order.end(), r.head) == head_order.end())
      head_order.push_back(r.head);

  for (HeadType head : head_order) {
    double acc = 0, accs = 0, acct = 0, dom = 0, gate = 0, sal = 0;
    std::size_t n = 0, n_gate = 0, n_sal = 0;
    for (const auto& r : results) {
      if (r.head != head) continue;
      std::snprintf(buf, sizeof(buf), "%-22s %6llu %9s %9s %9s %10s %8s %9s\n", to_string(r.head),
                    static_cast<unsigned long long>(r.seed),
                    detail::fmt_fixed(r.accuracy_branch_s).c_str(),
                    detail::fmt_fixed(r.accuracy_branch_t).c_str(),
                    detail::fmt_fixed(r.accuracy).c_str(),
                    detail::fmt_fixed(r.dominance_ratio, 3).c_str(),
                    detail::fmt_opt(r.gate_entropy, 3).c_str(),
                    detail::fmt_opt(r.salient_recovery).c_str());
      out << buf;
      acc += r.accuracy;
      accs += r.accuracy_branch_s;
      acct += r.accuracy_branch_t;
      dom += r.dominance_ratio;
      if (r.gate_entropy) {
        gate += *r.gate_entropy;
        ++n_gate;
      }
      if (r.salient_recovery) {
        sal += *r.salient_recovery;
        ++n_sal;
      }
      ++n;
    }
    const double dn = static_cast<double>(n);
    std::snprintf(buf, sizeof(buf), "%-22s %6s %9s %9s %9s %10s %8s %9s\n", to_string(head), "mean",
                  detail::fmt_fixed(accs / dn).c_str(), detail::fmt_fixed(acct / dn).c_str(),
                  detail::fmt_fixed(acc / dn).c_str(), detail::fmt_fixed(dom / dn, 3).c_str(),
                  n_gate ? detail::fmt_fixed(gate / n_gate, 3).c_str() : "-",
                  n_sal ? detail::fmt_fixed(sal / n_sal).c_str() : "-");
    out << buf;
    out << std::string(88, '-') << '\n';
  }
  return out.str();
}

}  // namespace jna
