#include "hadamax/runs.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "hadamax/diagnostics.hpp"
#include "hadamax/envs.hpp"

namespace hadamax::runs {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::size_t worker_threads(const RunConfig& cfg) { return cfg.threads ? cfg.threads : envs::thread_budget(); }

pqn::TrainOptions options_for(const RunConfig& cfg, std::ostream* progress) {
  pqn::TrainOptions o;
  o.cfg = cfg.train;
  o.spec = cfg.encoder;
  o.env = cfg.env;
  o.resolution = cfg.resolution;
  o.seed = cfg.seed;
  o.out_dir = cfg.out_dir;
  o.log_interval = cfg.log_interval;
  o.checkpoint_interval = cfg.checkpoint_interval;
  o.probe_size = cfg.probe_size;
  o.threads = worker_threads(cfg);
  if (progress) o.progress = [progress](const std::string& row) { *progress << row << std::endl; };
  return o;
}

}  // namespace

std::string describe(const EncoderSpec& spec) {
  std::ostringstream out;
  const bool ln = spec.norm == NormKind::layer_norm;
  if (spec.variant == Variant::resnet15) {
    const std::size_t widths[] = {16, 32, 32};
    for (std::size_t s = 0; s < 3; ++s)
      out << "stage" << s + 1 << "  conv 3x3/1 " << widths[s] << (ln ? ", ln" : "")
          << ", maxpool 3/2, 2 residual blocks (relu, conv 3x3/1" << (ln ? ", ln" : "") << ")\n";
  } else {
    const auto plan = conv_plan(spec);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const ConvStage& st = plan[i];
      out << "block" << i + 1 << "  conv " << st.kernel << 'x' << st.kernel << '/' << st.conv_stride << ' '
          << st.channels << (st.hadamard ? " x2 hadamard" : "") << ", " << to_string(spec.activation)
          << (ln ? ", ln" : "");
      if (st.pool_window) out << ", maxpool " << st.pool_window << '/' << st.pool_stride;
      out << '\n';
    }
  }
  out << "dense  " << spec.hidden_width << (ln ? ", ln" : "") << ", "
      << (spec.variant == Variant::resnet15 ? "relu" : to_string(spec.activation)) << "\nhead   " << spec.action_dim
      << '\n';
  return out.str();
}

pqn::TrainResult train(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  cfg.save(dir / "config.cfg");
  const EncoderSpec spec = pqn::spec_for_env(cfg.encoder, cfg.env, cfg.resolution);
  if (progress) *progress << "encoder\n" << describe(spec) << pqn::kLogHeader << '\n';

  pqn::TrainResult res = pqn::train(options_for(cfg, progress));

  std::ofstream sum(dir / "summary.txt");
  sum << "env " << cfg.env << " at " << cfg.resolution << "x" << cfg.resolution << ", seed " << cfg.seed << '\n'
      << "params " << res.net->param_count() << '\n'
      << "episodes " << res.episode_returns.size() << '\n'
      << "last50_return " << fixed(res.last50_return, 4) << " (optimum "
      << envs::make_env(cfg.env, cfg.resolution).optimal_return() << ")\n"
      << "srank " << res.srank[0] << ' ' << res.srank[1] << ' ' << res.srank[2] << ' ' << res.srank[3] << '\n'
      << "dead_frac " << fixed(res.dead_frac, 4) << '\n'
      << "wall_seconds " << fixed(res.seconds, 1) << "\ncpu_seconds " << fixed(res.cpu_seconds, 1) << '\n';
  return res;
}

EvalResult evaluate(const EncoderNet<float>& net, const std::string& env, std::size_t episodes, double epsilon,
                    std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("episodes: must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon: must lie in [0, 1]");
  const EncoderSpec& spec = net.spec();
  const std::size_t n = std::min<std::size_t>(episodes, 16);
  envs::VectorEnv venv(env, n, seed, spec.height);
  if (venv.num_actions() != spec.action_dim || spec.height != spec.width || spec.stack != envs::kStack)
    throw ConfigError("checkpoint encoder does not match the observation/action shape of " + env);
  std::mt19937_64 rng(seed ^ 0x6a09e667f3bcc909ULL);
  EvalResult r;
  std::vector<std::int32_t> actions(n);
  while (r.returns.size() < episodes) {
    const Tensor<float> q = net.q_values(venv.observations());
    for (std::size_t i = 0; i < n; ++i) actions[i] = pqn::select_action(q.data().subspan(i * spec.action_dim, spec.action_dim), epsilon, rng);
    for (double ret : venv.step(actions).finished_returns)
      if (r.returns.size() < episodes) r.returns.push_back(ret);
  }
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / static_cast<double>(r.returns.size());
  double ss = 0.0;
  for (double v : r.returns) ss += (v - r.mean) * (v - r.mean);
  r.stddev = r.returns.size() > 1 ? std::sqrt(ss / static_cast<double>(r.returns.size() - 1)) : 0.0;
  return r;
}

EvalResult evaluate_checkpoint(const fs::path& checkpoint, const std::string& env, std::size_t episodes,
                               double epsilon, std::uint64_t seed, const fs::path& csv) {
  if (episodes == 0) throw ConfigError("episodes: must be positive");
  const EncoderNet<float> net = load_checkpoint<float>(checkpoint);
  const EncoderSpec expected = pqn::spec_for_env(net.spec(), env, net.spec().height);
  if (!(expected == net.spec()))
    throw ConfigError("checkpoint " + checkpoint.string() + " was not built for " + env + " observations");
  EvalResult r = evaluate(net, env, episodes, epsilon, seed);
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw RunError("cannot write " + csv.string());
    out << "episode,return\n";
    for (std::size_t i = 0; i < r.returns.size(); ++i) out << i << ',' << r.returns[i] << '\n';
  }
  return r;
}

std::vector<Arm> ablation_arms() {
  const EncoderSpec full = EncoderSpec::hadamax(1);
  // Additions to Nature are Hadamax-family specs with every component off but one.
  EncoderSpec bare = full;
  bare.use_maxpool = false;
  bare.use_hadamard = false;
  bare.activation = Activation::relu;

  std::vector<Arm> arms;
  arms.push_back({"hadamax", full});
  EncoderSpec s = full;
  s.use_maxpool = false;
  arms.push_back({"minus_maxpool", s});
  s = full;
  s.use_hadamard = false;
  arms.push_back({"minus_hadamard", s});
  s = full;
  s.activation = Activation::relu;
  arms.push_back({"minus_gelu", s});
  arms.push_back({"nature", EncoderSpec::nature(1)});
  s = bare;
  s.use_maxpool = true;
  arms.push_back({"nature_plus_maxpool", s});
  s = bare;
  s.use_hadamard = true;
  arms.push_back({"nature_plus_hadamard", s});
  s = bare;
  s.activation = Activation::gelu;
  arms.push_back({"nature_plus_gelu", s});
  return arms;
}

std::vector<ArmOutcome> ablate(const RunConfig& base, std::ostream* progress) {
  base.validate();
  const fs::path root = base.out_dir;
  fs::create_directories(root);
  std::vector<ArmOutcome> outcomes;
  for (const Arm& arm : ablation_arms()) {
    RunConfig cfg = base;
    cfg.encoder = arm.spec;
    cfg.encoder.hidden_width = base.encoder.hidden_width;
    cfg.encoder.norm = base.encoder.norm;
    cfg.out_dir = (root / arm.name).string();
    if (progress) *progress << "== arm " << arm.name << '\n';
    const pqn::TrainResult r = train(cfg, progress);
    ArmOutcome o;
    o.name = arm.name;
    o.description = describe(pqn::spec_for_env(cfg.encoder, cfg.env, cfg.resolution));
    o.params = r.net->param_count();
    o.last50_return = r.last50_return;
    o.srank = r.srank;
    o.dead_frac = r.dead_frac;
    o.seconds = r.seconds;
    outcomes.push_back(std::move(o));
  }

  std::ofstream csv(root / "ablation.csv");
  csv << "arm,params,last50_return,srank_l1,srank_l2,srank_l3,srank_l4,dead_frac,seconds\n";
  for (const auto& o : outcomes)
    csv << o.name << ',' << o.params << ',' << fixed(o.last50_return, 6) << ',' << o.srank[0] << ',' << o.srank[1]
        << ',' << o.srank[2] << ',' << o.srank[3] << ',' << fixed(o.dead_frac, 6) << ',' << fixed(o.seconds, 1)
        << '\n';
  std::ofstream txt(root / "ablation.txt");
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %10s %18s %6s\n", "arm", "params", "return", "srank", "dead");
  txt << line;
  for (const auto& o : outcomes) {
    const std::string sr = std::to_string(o.srank[0]) + "/" + std::to_string(o.srank[1]) + "/" +
                           std::to_string(o.srank[2]) + "/" + std::to_string(o.srank[3]);
    std::snprintf(line, sizeof line, "%-22s %10zu %10.3f %18s %6.3f\n", o.name.c_str(), o.params, o.last50_return,
                  sr.c_str(), o.dead_frac);
    txt << line;
  }
  txt << '\n';
  for (const auto& o : outcomes) txt << "[" << o.name << "]\n" << o.description << '\n';
  return outcomes;
}

// ---- report ----------------------------------------------------------------

namespace {

struct RunLog {
  std::string name;
  std::map<std::size_t, std::vector<std::string>> rows;  // iter -> cells
};

RunLog read_log(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw RunError("run directory not found: " + dir.string());
  const fs::path file = dir / "log.csv";
  std::ifstream in(file);
  if (!in) throw RunError("missing training log: " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != pqn::kLogHeader) throw RunError(file.string() + ": unexpected header");
  RunLog log;
  log.name = fs::absolute(dir).lexically_normal().filename().string();
  if (log.name.empty()) log.name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() != 10) throw RunError(file.string() + ": malformed row '" + line + "'");
    log.rows[std::stoul(cells[0])] = std::move(cells);
  }
  return log;
}

void write_curve(const fs::path& path, const std::vector<RunLog>& logs, std::size_t column) {
  std::set<std::size_t> iters;
  for (const auto& l : logs)
    for (const auto& [it, _] : l.rows) iters.insert(it);
  std::ofstream out(path);
  if (!out) throw RunError("cannot write " + path.string());
  out << "iter";
  for (const auto& l : logs) out << ',' << l.name;
  out << '\n';
  for (std::size_t it : iters) {
    out << it;
    for (const auto& l : logs) {
      auto row = l.rows.find(it);
      out << ',' << (row == l.rows.end() ? "" : row->second[column]);
    }
    out << '\n';
  }
}

}  // namespace

void report(const ReportOptions& opts) {
  if (opts.run_dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<RunLog> logs;
  std::map<std::string, int> seen;
  for (const auto& d : opts.run_dirs) {
    logs.push_back(read_log(d));
    if (int n = seen[logs.back().name]++; n > 0) logs.back().name += "_" + std::to_string(n);
  }
  fs::create_directories(opts.out_dir);
  write_curve(opts.out_dir / "learning_curve.csv", logs, 4);
  for (std::size_t l = 0; l < 4; ++l)
    write_curve(opts.out_dir / ("srank_l" + std::to_string(l + 1) + ".csv"), logs, 5 + l);
  write_curve(opts.out_dir / "dead_frac.csv", logs, 9);

  std::ofstream sum(opts.out_dir / "summary.txt");
  char line[200];
  std::snprintf(line, sizeof line, "%-24s %8s %12s %12s %18s %8s\n", "run", "iters", "frames", "return", "srank",
                "dead");
  sum << line;
  for (const auto& l : logs) {
    if (l.rows.empty()) continue;
    const auto& last = l.rows.rbegin()->second;
    const std::string sr = last[5] + "/" + last[6] + "/" + last[7] + "/" + last[8];
    std::snprintf(line, sizeof line, "%-24s %8s %12s %12s %18s %8s\n", l.name.c_str(), last[0].c_str(),
                  last[1].c_str(), last[4].c_str(), sr.c_str(), last[9].c_str());
    sum << line;
  }

  if (opts.score_table) {
    const auto table = diag::ScoreTable::read_csv(*opts.score_table);
    std::vector<double> taus = opts.taus;
    if (taus.empty())
      for (int i = 0; i <= 80; ++i) taus.push_back(0.1 * i);
    std::sort(taus.begin(), taus.end());
    const auto profile = diag::score_profile(table, taus);
    std::ofstream pc(opts.out_dir / "score_profile.csv");
    pc << "tau,fraction\n";
    for (std::size_t i = 0; i < taus.size(); ++i) pc << taus[i] << ',' << profile[i] << '\n';
    sum << "\nmedian_hns " << diag::median_hns(table) << '\n';
    for (auto [name, subset] : {std::pair{"atari3", diag::Subset::atari3}, std::pair{"atari10", diag::Subset::atari10}}) {
      try {
        sum << name << "_score " << diag::atari_subset_score(table, subset) << '\n';
      } catch (const std::invalid_argument& e) {
        sum << name << "_score n/a (" << e.what() << ")\n";
      }
    }
  }
}

}  // namespace hadamax::runs
