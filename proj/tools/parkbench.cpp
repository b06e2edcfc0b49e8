// parkbench: dataset generation, training, evaluation, plotting and
// gradient checks from the command line.

#include <cblas.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parkbench/ad/gradcheck.hpp"
#include "parkbench/cli_io.hpp"
#include "parkbench/errors.hpp"
#include "parkbench/metrics.hpp"
#include "parkbench/model.hpp"
#include "parkbench/pipeline.hpp"
#include "parkbench/training.hpp"

namespace fs = std::filesystem;
using namespace parkbench;
using json = nlohmann::ordered_json;

namespace {

template <typename T>
std::optional<T> given(const CLI::Option* o, const T& v) {
  return o->count() > 0 ? std::optional<T>(v) : std::nullopt;
}

Settings load_settings(const std::string& path) {
  return path.empty() ? Settings{} : Settings{read_config(path)};
}

void reject_unused(const Settings& s) {
  const auto extra = s.unused();
  if (!extra.empty()) throw ConfigError("unknown config key '" + extra.front() + "'");
}

fs::path dataset_file(const fs::path& p) {
  return fs::is_directory(p) ? p / "dataset.jsonl" : p;
}

// --- gen ------------------------------------------------------------------

struct GenArgs {
  std::string out, config;
  std::uint64_t seed = 0;
  int scenarios = 500;
  bool no_filter = false;
  CLI::Option *o_seed, *o_scenarios, *o_no_filter;
};

int cmd_gen(const GenArgs& a) {
  const Settings s = load_settings(a.config);
  GenConfig g;
  g.seed = s.seed(given(a.o_seed, a.seed), 0);
  g.count = s.get_int("scenarios", given(a.o_scenarios, a.scenarios), 500);
  g.filter = !s.get_bool("no_filter", given(a.o_no_filter, a.no_filter), false);
  g.params.spawn_back = s.get_double("spawn_back", std::nullopt, g.params.spawn_back);
  g.params.style_len_lo = s.get_double("style_len_lo", std::nullopt, g.params.style_len_lo);
  g.params.style_len_hi = s.get_double("style_len_hi", std::nullopt, g.params.style_len_hi);
  reject_unused(s);

  const auto rep = generate_dataset(g);
  if (2 * rep.infeasible > g.count) {
    throw DataError("gen: " + std::to_string(rep.infeasible) + " of " + std::to_string(g.count) +
                    " scenarios infeasible");
  }
  const fs::path out = a.out;
  const fs::path data = out / "dataset.jsonl";
  const fs::path census = out / "census.json";
  write_atomic(data, dataset_to_text(rep.records));
  json c;
  for (int k = 1; k <= 4; ++k) {
    const auto it = rep.kshot_census.find(k);
    c[std::to_string(k) + "-shot"] = it == rep.kshot_census.end() ? 0 : it->second;
  }
  c["total"] = rep.records.size();
  c["infeasible"] = rep.infeasible;
  c["filtered"] = rep.filtered;
  write_atomic(census, c.dump(2) + "\n");

  Manifest m;
  m.command = "gen";
  m.seed = g.seed;
  m.config = {{"scenarios", g.count},
              {"filter", g.filter},
              {"spawn_back", g.params.spawn_back},
              {"style_len_lo", g.params.style_len_lo},
              {"style_len_hi", g.params.style_len_hi}};
  m.outputs = {data, census};
  write_atomic(out / "manifest.json", manifest_json(m));
  std::cout << c.dump() << "\n";
  return 0;
}

// --- shared train/eval data path ---------------------------------------------

struct DataSplit {
  std::vector<TrainingSample> train, val;
  double dt = 0.0;
};

DataSplit load_split(const fs::path& data, int horizon, int stride, double ratio,
                     std::uint64_t seed) {
  const auto records = read_dataset(dataset_file(data));
  if (records.empty()) throw DataError("dataset " + data.string() + " is empty");
  DataSplit d;
  d.dt = records.front().traj.dt;
  for (const auto& r : records) {
    if (r.traj.dt != d.dt) throw DataError("dataset mixes frame intervals");
  }
  const auto samples = samples_from_records(records, horizon, stride);
  std::tie(d.train, d.val) = split_dataset(samples, ratio, derive_seed(seed, {0x5911}));
  return d;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, ablation = "full", waypoint_loss = "hybrid";
  std::uint64_t seed = 0;
  int epochs = 30, batch = 24, stride = 10, val_limit = 0, warmup = 2, ss_start = 5, ss_end = 25;
  double lr = 2e-4, lr_min = 1e-6, clip = 0.5, split = 0.8;
  bool no_sched = false;
  CLI::Option *o_no_sched,
      *o_seed, *o_epochs, *o_batch, *o_stride, *o_val_limit, *o_warmup, *o_ss_start,
      *o_ss_end, *o_lr, *o_lr_min, *o_clip, *o_split, *o_ablation, *o_wl;
};

WaypointLossMode parse_loss_mode(const std::string& s) {
  if (s == "hybrid") return WaypointLossMode::kHybrid;
  if (s == "soft_argmax") return WaypointLossMode::kSoftArgmax;
  if (s == "token") return WaypointLossMode::kToken;
  throw ConfigError("unknown waypoint_loss '" + s + "'");
}

int cmd_train(const TrainArgs& a) {
  const Settings s = load_settings(a.config);
  const std::uint64_t seed = s.seed(given(a.o_seed, a.seed), 0);
  TrainConfig tc;
  tc.epochs = s.get_int("epochs", given(a.o_epochs, a.epochs), tc.epochs);
  tc.batch = s.get_int("batch", given(a.o_batch, a.batch), tc.batch);
  tc.lr_max = s.get_double("lr", given(a.o_lr, a.lr), tc.lr_max);
  tc.lr_min = s.get_double("lr_min", given(a.o_lr_min, a.lr_min), tc.lr_min);
  tc.warmup_epochs = s.get_int("warmup_epochs", given(a.o_warmup, a.warmup), tc.warmup_epochs);
  tc.clip = s.get_double("clip", given(a.o_clip, a.clip), tc.clip);
  tc.ss_start = s.get_int("ss_start", given(a.o_ss_start, a.ss_start), tc.ss_start);
  tc.ss_end = s.get_int("ss_end", given(a.o_ss_end, a.ss_end), tc.ss_end);
  tc.val_limit = s.get_int("val_limit", given(a.o_val_limit, a.val_limit), 0);
  tc.waypoint_loss = parse_loss_mode(
      s.get_string("waypoint_loss", given(a.o_wl, a.waypoint_loss), "hybrid"));
  tc.weights.waypoint = s.get_double("lambda_waypoints", std::nullopt, tc.weights.waypoint);
  tc.weights.motion = s.get_double("lambda_motion", std::nullopt, tc.weights.motion);
  tc.weights.smooth = s.get_double("lambda_smooth", std::nullopt, tc.weights.smooth);
  tc.weights.shift_window = s.get_int("smooth_window", std::nullopt, tc.weights.shift_window);
  tc.noise_pos = s.get_double("noise_pos", std::nullopt, tc.noise_pos);
  tc.noise_yaw_deg = s.get_double("noise_yaw_deg", std::nullopt, tc.noise_yaw_deg);
  const int stride = s.get_int("stride", given(a.o_stride, a.stride), 10);
  const double ratio = s.get_double("split", given(a.o_split, a.split), 0.8);
  const std::string ablation = s.get_string("ablation", given(a.o_ablation, a.ablation), "full");
  ModelConfig mc;
  apply_ablation(ablation, mc, tc);
  if (!s.get_bool("scheduled_sampling", given(a.o_no_sched, !a.no_sched), true)) {
    tc.scheduled_sampling = false;
  }
  tc.seed = derive_seed(seed, {0x7a1});
  reject_unused(s);
  tc.validate();
  if (stride < 1) throw ConfigError("stride must be >= 1");

  const fs::path data = dataset_file(a.data);
  const auto split = load_split(data, mc.codec.horizon, stride, ratio, seed);
  std::vector<PreparedSample> train, val;
  for (const auto& x : split.train) train.push_back(prepare_sample(x, mc));
  for (const auto& x : split.val) val.push_back(prepare_sample(x, mc));

  PlannerModel model(mc, derive_seed(seed, {0x30de1}));
  Trainer trainer(model, tc);
  json meta;
  meta["dt"] = split.dt;
  meta["stride"] = stride;
  meta["split"] = ratio;
  meta["seed"] = seed;
  meta["ablation"] = ablation;
  trainer.set_checkpoint_metadata(meta.dump());

  const fs::path out = a.out;
  const fs::path trace = out / "trace.jsonl";
  const fs::path ckpt = out / "best.ckpt";
  std::string trace_text;
  std::cout << "train " << train.size() << " val " << val.size() << " params "
            << model.params().parameter_count() << "\n";
  const auto result = trainer.fit(train, val, [&](const EpochRecord& r) {
    trace_text += epoch_record_json(r) + "\n";
    write_atomic(trace, trace_text);
    std::cout << epoch_record_json(r) << std::endl;
  });
  write_atomic(trace, trace_text);
  write_atomic(ckpt, result.best_checkpoint);

  Manifest m;
  m.command = "train";
  m.seed = seed;
  m.config = {{"ablation", ablation},
              {"epochs", tc.epochs},
              {"batch", tc.batch},
              {"lr", tc.lr_max},
              {"lr_min", tc.lr_min},
              {"warmup_epochs", tc.warmup_epochs},
              {"clip", tc.clip},
              {"scheduled_sampling", tc.scheduled_sampling},
              {"ss_start", tc.ss_start},
              {"ss_end", tc.ss_end},
              {"noise_pos", tc.noise_pos},
              {"noise_yaw_deg", tc.noise_yaw_deg},
              {"waypoint_loss", s.get_string("waypoint_loss", given(a.o_wl, a.waypoint_loss),
                                             "hybrid")},
              {"lambda_waypoints", tc.weights.waypoint},
              {"lambda_motion", tc.weights.motion},
              {"lambda_smooth", tc.weights.smooth},
              {"smooth_window", tc.weights.shift_window},
              {"stride", stride},
              {"split", ratio},
              {"val_limit", tc.val_limit},
              {"model", json::parse(mc.to_json())}};
  m.inputs = {data};
  m.outputs = {trace, ckpt};
  write_atomic(out / "manifest.json", manifest_json(m));
  if (result.diverged) throw NumericError(result.divergence + "; kept the last good checkpoint");
  std::cout << "best epoch " << result.best_epoch << " val_l2 " << result.best_val_l2 << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, model, data, report, table, predictions, which = "val";
  int stride = 10;
  double split = 0.8;
  std::uint64_t seed = 0;
  CLI::Option *o_stride, *o_split, *o_seed;
};

std::vector<double> mean_attention(const std::vector<float>& w, int n) {
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (w.empty()) return out;
  const std::size_t rows = w.size() / static_cast<std::size_t>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int k = 0; k < n; ++k) out[k] += w[r * static_cast<std::size_t>(n) + k];
  }
  for (auto& v : out) v /= static_cast<double>(rows);
  return out;
}

int cmd_eval(const EvalArgs& a) {
  const bool echo = a.model == "echo";
  if (!echo && !a.model.empty()) throw ConfigError("unknown --model '" + a.model + "'");
  if (echo == !a.ckpt.empty()) throw ConfigError("eval needs exactly one of --ckpt or --model echo");

  std::optional<PlannerModel> model;
  ModelConfig mc;
  int stride = a.stride;
  double ratio = a.split;
  std::uint64_t seed = a.seed;
  std::optional<double> ckpt_dt;
  if (!echo) {
    const auto ck = ad::read_checkpoint(a.ckpt);
    model.emplace(PlannerModel::from_checkpoint(ck));
    mc = model->config();
    try {
      const auto extra = nlohmann::json::parse(ck.metadata).at("extra");
      if (!a.o_stride->count()) stride = extra.at("stride").get<int>();
      if (!a.o_split->count()) ratio = extra.at("split").get<double>();
      if (!a.o_seed->count()) seed = extra.at("seed").get<std::uint64_t>();
      ckpt_dt = extra.at("dt").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("checkpoint metadata: ") + e.what());
    }
  }
  const fs::path data = dataset_file(a.data);
  const auto split = load_split(data, mc.codec.horizon, stride, ratio, seed);
  if (ckpt_dt && std::abs(*ckpt_dt - split.dt) > 1e-12) {
    throw DataError("checkpoint was trained on dt=" + std::to_string(*ckpt_dt) +
                    " but the dataset uses dt=" + std::to_string(split.dt));
  }
  std::vector<TrainingSample> chosen;
  if (a.which == "val") {
    chosen = split.val;
  } else if (a.which == "all") {
    chosen = split.train;
    chosen.insert(chosen.end(), split.val.begin(), split.val.end());
  } else {
    throw ConfigError("--split-set must be val or all");
  }
  if (chosen.empty()) throw DataError("evaluation split is empty");

  std::vector<SampleMetrics> rows;
  std::string preds;
  for (const auto& ts : chosen) {
    const auto ps = prepare_sample(ts, mc);
    PlannerOutput out;
    if (echo) {
      out.waypoints = ps.waypoints;
      for (auto m : ps.motion) {
        out.motion_probs.push_back(m == MotionState::kForward ? std::array<double, 2>{1.0, 0.0}
                                                              : std::array<double, 2>{0.0, 1.0});
      }
    } else {
      out = model->predict(ps.input);
    }
    rows.push_back(evaluate_sample(make_eval_sample(ps, out, mc.codec)));
    if (!a.predictions.empty()) {
      PredictionRecord p;
      p.scenario_id = ps.scenario_id;
      p.frame_index = ps.frame_index;
      p.waypoints = out.waypoints;
      p.motion_probs = out.motion_probs;
      p.attention = mean_attention(out.fusion_attention, mc.tokens());
      preds += prediction_to_line(p) + "\n";
    }
  }
  const auto report = aggregate(rows);
  const std::string label = echo ? "echo" : fs::path(a.ckpt).stem().string();
  const std::string table = render_table(report, label);
  write_atomic(a.report, report_to_json(report));
  if (!a.table.empty()) write_atomic(a.table, table);
  if (!a.predictions.empty()) write_atomic(a.predictions, preds);
  std::cout << table;
  return 0;
}

// --- plot -------------------------------------------------------------------

struct PlotArgs {
  std::string traj, pred, out, scenario;
  int index = 0;
  long frame = -1;
  bool attention = false;
};

int cmd_plot(const PlotArgs& a) {
  const auto records = read_dataset(dataset_file(a.traj));
  if (records.empty()) throw DataError("no trajectories in " + a.traj);
  const DatasetRecord* rec = nullptr;
  if (!a.scenario.empty()) {
    for (const auto& r : records) {
      if (r.scenario_id == a.scenario) rec = &r;
    }
    if (rec == nullptr) throw DataError("scenario " + a.scenario + " not found");
  } else {
    if (a.index < 0 || static_cast<std::size_t>(a.index) >= records.size()) {
      throw ConfigError("--index out of range");
    }
    rec = &records[static_cast<std::size_t>(a.index)];
  }
  const ScenarioParams params;
  PlotSpec spec;
  spec.lot = make_lot(params);
  spec.bounds = lot_bounds(params);
  spec.target_slot_id = rec->target_slot_id;
  spec.vehicles = rec->static_vehicles;
  for (const auto& f : rec->traj.frames) {
    spec.gt.push_back(f.pose);
    spec.gt_states.push_back(f.state);
  }
  if (!a.pred.empty()) {
    bool attention_done = false;
    for (const auto& p : read_predictions(a.pred)) {
      if (p.scenario_id != rec->scenario_id) continue;
      if (a.frame >= 0 && p.frame_index != static_cast<std::size_t>(a.frame)) continue;
      if (p.frame_index >= rec->traj.frames.size()) {
        throw DataError("prediction frame " + std::to_string(p.frame_index) + " out of range");
      }
      const Pose2D ego = rec->traj.frames[p.frame_index].pose;
      std::vector<Pose2D> world;
      for (const auto& w : p.waypoints) world.push_back(pose_from_frame(w, ego));
      spec.predictions.push_back(std::move(world));
      if (a.attention && !attention_done && !p.attention.empty()) {
        const int side = static_cast<int>(std::lround(std::sqrt(p.attention.size())));
        if (static_cast<std::size_t>(side * side) != p.attention.size()) {
          throw DataError("attention vector is not a square grid");
        }
        spec.attention = p.attention;
        spec.attention_side = side;
        spec.attention_cell = (BevOccupancy::kSize / side) * BevOccupancy::kResolution;
        spec.attention_ego = ego;
        attention_done = true;
      }
    }
  }
  write_atomic(a.out, render_svg(spec));
  return 0;
}

// --- gradcheck ----------------------------------------------------------------

struct GradArgs {
  std::string corrupt;
  double tol = 1e-4;
  std::uint64_t seed = 1;
  std::vector<std::string> only;
};

int cmd_gradcheck(const GradArgs& a) {
  if (!a.corrupt.empty()) ad::set_gradient_corruption(a.corrupt);
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& name : ad::gradcheck_registry()) {
    if (!a.only.empty() && std::find(a.only.begin(), a.only.end(), name) == a.only.end()) continue;
    const auto r = ad::run_gradcheck(name, a.seed, a.tol);
    ok = ok && r.passed;
    std::printf("%-18s %.3e %s\n", r.name.c_str(), r.max_rel_error, r.passed ? "PASS" : "FAIL");
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("total %.2fs %s\n", secs, ok ? "all passed" : "FAILED");
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);
  CLI::App app{"parkbench: multi-shot parking planner toolkit"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate scenarios and expert demonstrations");
  ga.o_seed = gen->add_option("--seed", ga.seed, "base seed");
  ga.o_scenarios = gen->add_option("--scenarios", ga.scenarios, "scenarios to attempt");
  ga.o_no_filter = gen->add_flag("--no-filter", ga.no_filter, "keep out-of-band trajectories");
  gen->add_option("--out", ga.out, "output directory")->required();
  gen->add_option("--config", ga.config, "key = value config file");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the planner");
  train->add_option("--data", ta.data, "dataset file or gen directory")->required();
  train->add_option("--out", ta.out, "output directory")->required();
  train->add_option("--config", ta.config, "key = value config file");
  ta.o_seed = train->add_option("--seed", ta.seed);
  ta.o_epochs = train->add_option("--epochs", ta.epochs);
  ta.o_batch = train->add_option("--batch", ta.batch);
  ta.o_lr = train->add_option("--lr", ta.lr);
  ta.o_lr_min = train->add_option("--lr-min", ta.lr_min);
  ta.o_warmup = train->add_option("--warmup-epochs", ta.warmup);
  ta.o_clip = train->add_option("--clip", ta.clip);
  ta.o_ss_start = train->add_option("--ss-start", ta.ss_start);
  ta.o_ss_end = train->add_option("--ss-end", ta.ss_end);
  ta.o_stride = train->add_option("--stride", ta.stride, "frames between windows");
  ta.o_split = train->add_option("--split", ta.split, "train fraction of scenarios");
  ta.o_val_limit = train->add_option("--val-limit", ta.val_limit, "validate on at most N windows");
  ta.o_ablation = train->add_option("--ablation", ta.ablation, "full|traj_only|bev_target|no_sched");
  ta.o_no_sched = train->add_flag("--no-sched", ta.no_sched, "turn scheduled sampling off");
  ta.o_wl = train->add_option("--waypoint-loss", ta.waypoint_loss, "hybrid|soft_argmax|token");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a checkpoint");
  eval->add_option("--ckpt", ea.ckpt, "checkpoint file");
  eval->add_option("--model", ea.model, "'echo' replays the ground truth");
  eval->add_option("--data", ea.data, "dataset file or gen directory")->required();
  eval->add_option("--report", ea.report, "report JSON path")->required();
  eval->add_option("--table", ea.table, "table text path");
  eval->add_option("--predictions", ea.predictions, "per-window predictions path");
  eval->add_option("--split-set", ea.which, "val|all");
  ea.o_stride = eval->add_option("--stride", ea.stride);
  ea.o_split = eval->add_option("--split", ea.split);
  ea.o_seed = eval->add_option("--seed", ea.seed);

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "render a trajectory as SVG");
  plot->add_option("--traj", pa.traj, "dataset file or gen directory")->required();
  plot->add_option("--scenario", pa.scenario, "scenario id");
  plot->add_option("--index", pa.index, "record index when no id is given");
  plot->add_option("--pred", pa.pred, "predictions file from eval");
  plot->add_option("--frame", pa.frame, "only the prediction made at this frame");
  plot->add_flag("--attention", pa.attention, "overlay fusion attention");
  plot->add_option("--out", pa.out, "SVG path")->required();

  GradArgs gra;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every op");
  grad->add_option("--corrupt", gra.corrupt, "scale one op's gradient by 1.01");
  grad->add_option("--tol", gra.tol);
  grad->add_option("--seed", gra.seed);
  grad->add_option("--only", gra.only, "restrict to these checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*gen) return cmd_gen(ga);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*plot) return cmd_plot(pa);
    if (*grad) return cmd_gradcheck(gra);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
