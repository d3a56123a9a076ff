#include "hadamax/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <limits>
#include <numeric>

#include "hadamax/diagnostics.hpp"

namespace hadamax::pqn {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + stream;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<Tensor<float>*> param_pointers(EncoderNet<float>& net) {
  std::vector<Tensor<float>*> out;
  for (auto& p : net.parameters()) out.push_back(&p.value);
  return out;
}

}  // namespace

std::string format_log_row(const LogRow& r) {
  std::string s = std::to_string(r.iter) + ',' + std::to_string(r.frames) + ',' + fmt(r.epsilon) + ',' + fmt(r.loss) +
                  ',' + fmt(r.mean_return);
  for (auto k : r.srank) s += ',' + std::to_string(k);
  s += ',' + fmt(r.dead_frac);
  return s;
}

double trailing_mean(const std::vector<double>& values, std::size_t window) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(window, values.size());
  return std::accumulate(values.end() - static_cast<std::ptrdiff_t>(n), values.end(), 0.0) / static_cast<double>(n);
}

std::vector<std::vector<std::size_t>> minibatch_partition(std::size_t rows, std::size_t parts, std::mt19937_64& rng) {
  if (parts == 0 || rows % parts != 0) throw std::invalid_argument("rows must split evenly into minibatches");
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t size = rows / parts;
  std::vector<std::vector<std::size_t>> out(parts);
  for (std::size_t p = 0; p < parts; ++p)
    out[p].assign(perm.begin() + static_cast<std::ptrdiff_t>(p * size),
                  perm.begin() + static_cast<std::ptrdiff_t>((p + 1) * size));
  return out;
}

EncoderSpec spec_for_env(EncoderSpec spec, const std::string& env, std::size_t resolution) {
  const envs::Environment probe = envs::make_env(env, resolution);
  spec.action_dim = probe.num_actions();
  spec.height = resolution;
  spec.width = resolution;
  spec.stack = envs::kStack;
  return spec;
}

Tensor<float> collect_probe_batch(const std::string& env, std::size_t resolution, std::size_t count,
                                  std::uint64_t seed) {
  constexpr std::size_t kEnvs = 16;
  envs::VectorEnv venv(env, kEnvs, seed, resolution);
  std::mt19937_64 rng(seed);
  const Shape& os = venv.observations().shape();
  const std::size_t frame = os[1] * os[2] * os[3];
  Tensor<float> out({count, os[1], os[2], os[3]});
  std::vector<std::int32_t> actions(kEnvs);
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(venv.num_actions()) - 1);
  for (std::size_t filled = 0; filled < count;) {
    const std::size_t take = std::min(kEnvs, count - filled);
    std::memcpy(out.raw() + filled * frame, venv.observations().raw(), take * frame * sizeof(float));
    filled += take;
    for (auto& a : actions) a = pick(rng);
    venv.step(actions);
  }
  return out;
}

ProbeStats probe_diagnostics(const EncoderNet<float>& net, const Tensor<float>& probe_obs, std::size_t chunk) {
  const std::size_t B = probe_obs.extent(0);
  const std::size_t frame = probe_obs.size() / B;
  std::array<std::vector<double>, 4> feats;
  std::array<std::size_t, 4> width{};
  for (std::size_t lo = 0; lo < B; lo += chunk) {
    const std::size_t n = std::min(chunk, B - lo);
    Shape s = probe_obs.shape();
    s[0] = n;
    Tensor<float> part(s, std::vector<float>(probe_obs.raw() + lo * frame, probe_obs.raw() + (lo + n) * frame));
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto out = net.forward(tape, part);
    if (out.probes.size() != 4) throw std::logic_error("encoder exposes " + std::to_string(out.probes.size()) + " probes");
    for (std::size_t l = 0; l < 4; ++l) {
      const auto& v = out.probes[l].value();
      width[l] = v.size() / n;
      feats[l].insert(feats[l].end(), v.data().begin(), v.data().end());
    }
  }
  ProbeStats st;
  for (std::size_t l = 0; l < 4; ++l) {
    const Tensor<double> phi({B, width[l]}, std::move(feats[l]));
    st.srank[l] = diag::effective_rank(phi);
    if (l == 3) st.dead_frac = diag::dead_neuron_fraction(phi);
  }
  return st;
}

TrainResult train(const TrainOptions& opts) {
  const TrainConfig& cfg = opts.cfg;
  cfg.validate();
  const EncoderSpec spec = spec_for_env(opts.spec, opts.env, opts.resolution);
  spec.validate();
  if (opts.log_interval == 0) throw ConfigError("run.log_interval: must be positive");

  const auto wall0 = std::chrono::steady_clock::now();
  const double cpu0 = cpu_seconds();

  EncoderNet<float> net(spec, mix(opts.seed, 1));
  envs::VectorEnv venv(opts.env, cfg.num_envs, mix(opts.seed, 2) >> 16, opts.resolution, opts.threads);
  const Tensor<float> probe = collect_probe_batch(opts.env, opts.resolution, opts.probe_size, mix(opts.seed, 3));
  std::mt19937_64 act_rng(mix(opts.seed, 4));
  std::mt19937_64 batch_rng(mix(opts.seed, 5));

  std::vector<Tensor<float>> param_values;
  for (const auto& p : net.parameters()) param_values.push_back(p.value);
  OptimizerState<float> opt = OptimizerState<float>::like(param_values);
  param_values.clear();
  const auto params = param_pointers(net);

  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir / "checkpoints");
    log_file.open(opts.out_dir / "log.csv");
    if (!log_file) throw std::runtime_error("cannot write " + (opts.out_dir / "log.csv").string());
    log_file << kLogHeader << '\n';
  }
  auto checkpoint = [&](const std::string& name, std::size_t iter, std::uint64_t frames) {
    const std::filesystem::path dir =
        opts.out_dir.empty() ? std::filesystem::temp_directory_path() : opts.out_dir / "checkpoints";
    const std::filesystem::path path = dir / name;
    save_checkpoint(path, net,
                    {{"run.env", opts.env},
                     {"run.seed", std::to_string(opts.seed)},
                     {"run.iter", std::to_string(iter)},
                     {"run.frames", std::to_string(frames)}});
    return path;
  };

  TrainResult res;
  const std::size_t T = cfg.num_steps, N = cfg.num_envs, A = spec.action_dim;
  const std::size_t rows = T * N, mb = cfg.minibatch_size();
  const std::size_t iters = cfg.iterations();
  std::uint64_t frames = 0;

  for (std::size_t it = 0; it < iters; ++it) {
    const double eps = epsilon_at(frames, cfg);
    TrajectoryBatch batch = collect_rollout(venv, net, frames, cfg, act_rng);
    frames += rows;
    res.episode_returns.insert(res.episode_returns.end(), batch.finished_returns.begin(),
                               batch.finished_returns.end());

    const Tensor<float> q_boot = net.q_values(batch.next_obs_last);
    const std::vector<double> q_all(batch.q_all.data().begin(), batch.q_all.data().end());
    const std::vector<double> q_next(q_boot.data().begin(), q_boot.data().end());
    const std::vector<double> targets =
        lambda_returns(T, N, A, batch.rewards, batch.dones, q_all, q_next, cfg.gamma, cfg.lambda);

    const Shape& os = batch.obs.shape();
    const Tensor<float> prepared = prepare_observation(batch.obs.reshaped({rows, os[2], os[3], os[4]}));
    const std::size_t frame = prepared.size() / rows;
    Shape mb_shape = prepared.shape();
    mb_shape[0] = mb;

    double loss_sum = 0.0;
    std::size_t updates = 0;
    for (std::size_t epoch = 0; epoch < cfg.num_epochs; ++epoch) {
      for (const auto& idx : minibatch_partition(rows, cfg.num_minibatches, batch_rng)) {
        Tensor<float> x(mb_shape);
        Tensor<float> y({mb});
        std::vector<std::int32_t> acts(mb);
        for (std::size_t i = 0; i < mb; ++i) {
          std::memcpy(x.raw() + i * frame, prepared.raw() + idx[i] * frame, frame * sizeof(float));
          y[i] = static_cast<float>(targets[idx[i]]);
          acts[i] = batch.actions[idx[i]];
        }
        Tape<float> tape;
        const auto out = net.forward_prepared(tape, tape.constant(std::move(x)));
        const Var<float> loss = pqn_loss(take_along(out.q, std::span<const std::int32_t>(acts)), y);
        const float lv = loss.value().item();
        if (!std::isfinite(lv)) {
          const auto dump = checkpoint("fault.ckpt", it, frames);
          throw TrainingFault("non-finite loss at iteration " + std::to_string(it), dump);
        }
        tape.backward(loss);
        std::vector<Tensor<float>> grads;
        grads.reserve(out.params.size());
        for (const auto& p : out.params) grads.push_back(tape.grad(p));
        clip_grad_norm<float>(grads, cfg.max_grad_norm);
        try {
          radam_step<float>(params, grads, opt, cfg.lr);
        } catch (const NonFiniteError& e) {
          const auto dump = checkpoint("fault.ckpt", it, frames);
          throw TrainingFault(e.what(), dump);
        }
        loss_sum += lv;
        ++updates;
      }
    }

    const bool last = it + 1 == iters;
    if ((it + 1) % opts.log_interval == 0 || last) {
      const ProbeStats ps = probe_diagnostics(net, probe);
      LogRow row;
      row.iter = it + 1;
      row.frames = frames;
      row.epsilon = eps;
      row.loss = loss_sum / static_cast<double>(updates);
      row.mean_return = trailing_mean(res.episode_returns);
      row.srank = ps.srank;
      row.dead_frac = ps.dead_frac;
      res.log.push_back(row);
      if (log_file) log_file << format_log_row(row) << std::endl;
      if (opts.progress) opts.progress(format_log_row(row));
    }
    if (opts.checkpoint_interval && (it + 1) % opts.checkpoint_interval == 0 && !last && !opts.out_dir.empty())
      checkpoint("iter_" + std::to_string(it + 1) + ".ckpt", it + 1, frames);
  }
  if (!opts.out_dir.empty()) checkpoint("final.ckpt", iters, frames);

  res.last50_return = trailing_mean(res.episode_returns);
  res.srank = res.log.back().srank;
  res.dead_frac = res.log.back().dead_frac;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  res.cpu_seconds = cpu_seconds() - cpu0;
  res.net.emplace(std::move(net));
  return res;
}

}  // namespace hadamax::pqn
