// lgf command-line driver. Exit codes: 0 pass, 1 runtime/regime error,
// 2 acceptance failure, 3 configuration error.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "lgf/config.hpp"
#include "lgf/dynamics.hpp"
#include "lgf/exactlab/enumerated.hpp"
#include "lgf/oulimit.hpp"

namespace fs = std::filesystem;
using namespace lgf;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitError = 1;
constexpr int kExitFail = 2;
constexpr int kExitConfig = 3;

/// Files are staged as "<name>.partial" and renamed only when the whole
/// command succeeds; anything staged is removed otherwise.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  Artifacts(const Artifacts&) = delete;
  Artifacts& operator=(const Artifacts&) = delete;
  ~Artifacts() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : staged_) fs::remove(partial(f), ec);
  }

  std::ofstream open(const std::string& name, bool binary = false) {
    staged_.push_back(name);
    std::ofstream os(partial(name), binary ? std::ios::binary : std::ios::out);
    if (!os) throw std::runtime_error("cannot write " + partial(name).string());
    return os;
  }
  void text(const std::string& name, const std::string& body) {
    auto os = open(name);
    os << body;
  }
  void commit() {
    for (const auto& f : staged_) fs::rename(partial(f), dir_ / f);
    committed_ = true;
  }

 private:
  fs::path partial(const std::string& name) const { return dir_ / (name + ".partial"); }
  fs::path dir_;
  std::vector<std::string> staged_;
  bool committed_ = false;
};

/// Runs fn(i) for i in [0, n) on a small pool; callers write results into
/// slot i so aggregation order does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json mode_json(const ModeIndex& z) { return {z[0], z[1], z[2]}; }

json real_matrix_json(const Mat5d& m) {
  auto rows = json::array();
  for (int i = 0; i < 5; ++i) {
    auto row = json::array();
    for (int j = 0; j < 5; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Context {
  RunConfig cfg;
  VelocitySet V;
  EquilibriumParams p;
  int threads = 1;
};

// ---------------------------------------------------------------------------

int run_coefficients(const Context& c, Artifacts& out) {
  const auto cs = coefficient_set(c.p);
  const auto& B = c.p.brackets;
  json j;
  j["meta"] = provenance(c.cfg);
  j["n"] = c.p.n.n;
  j["brackets"] = {{"h0", B.h0},           {"h0_v2", B.h0_v2},
                   {"h0_v4", B.h0_v4},     {"h1_v2", B.h1_v2},
                   {"h1_v4", B.h1_v4},     {"h2_v2", B.h2_v2},
                   {"h2_v4", B.h2_v4},     {"h2_v6", B.h2_v6},
                   {"h2_v1sq_v2sq", B.h2_v1sq_v2sq}, {"Phi", B.Phi},
                   {"Phi1", B.Phi1},       {"Phi2", B.Phi2},
                   {"Psi1", B.Psi1},       {"Psi2", B.Psi2}};
  j["a0"] = cs.a0;
  j["a4"] = cs.a4;
  j["b0"] = cs.b0;
  j["b4"] = cs.b4;
  j["d"] = cs.d;
  j["c"] = cs.c;
  j["C"] = real_matrix_json(compressibility_matrix(c.p));
  j["K"] = cs.K;
  j["H"] = cs.H ? json(*cs.H) : json(nullptr);
  j["C_const"] = cs.C_const ? json(*cs.C_const) : json(nullptr);
  j["sound_speed_sq"] = cs.sound_speed_sq();
  out.text("coefficients.json", dump(j));
  return kExitPass;
}

int run_simulate(const Context& c, Artifacts& out) {
  const auto& d = c.cfg.dynamics;
  const auto Q = build_collision_table(c.V);
  const Simulator sim(c.V, Q, DynamicsParams{d.chi, d.epsilon, d.collision_rate_scale});
  const Vec5d m = mean_conserved(c.p);
  const auto lattice = std::make_shared<const Lattice>(Lattice::cube(c.V.dimension(), d.L));
  const FourierProjector proj(*lattice, c.cfg.ou.modes, d.epsilon);
  const ConservedLookup lookup(c.V);

  struct Replica {
    EventStats stats;
    bool exact = true;
    double numeric_defect = 0.0;
    double time = 0.0;
    std::string rows;
    std::string snapshot;
  };
  std::vector<Replica> reps(static_cast<std::size_t>(d.replicas));
  parallel_for(reps.size(), c.threads, [&](std::size_t r) {
    Rng rng(c.cfg.seed, r);
    auto s = empty_state(lattice);
    resample_product_measure(s, c.p, rng);
    auto& rep = reps[r];
    std::ostringstream rows;
    char buf[256];
    for (int f = 0; f <= d.frames; ++f) {
      if (f > 0) {
        rep.stats += d.events > 0 ? sim.step_events(s, d.events / static_cast<std::uint64_t>(d.frames) +
                                                           (static_cast<std::uint64_t>(f) <= d.events % d.frames ? 1 : 0),
                                                    rng)
                                  : sim.step_to(s, d.horizon * f / d.frames, rng);
      }
      const auto fresh = recompute_totals(s, c.V);
      rep.exact = rep.exact && fresh == s.totals;
      const auto num = evaluate(fresh, c.V.varpi());
      for (int b = 0; b < 5; ++b) rep.numeric_defect = std::max(rep.numeric_defect, std::abs(num[b] - s.numeric_totals[b]));
      for (const auto& fs : proj(s, lookup, m))
        for (int b = 0; b < 5; ++b) {
          std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%d,%d,%d,%d,%.17g,%.17g\n", r, f, s.time, fs.z[0], fs.z[1],
                        fs.z[2], b, fs.zhat(b).real(), fs.zhat(b).imag());
          rows << buf;
        }
    }
    rep.time = s.time;
    rep.rows = rows.str();
    if (c.cfg.outputs.wants("bin")) {
      std::ostringstream snap(std::ios::binary);
      write_snapshot(snap, s, {c.cfg.seed, c.V.varpi(), static_cast<std::uint32_t>(c.V.size()), sim.params(),
                               provenance(c.cfg).dump()});
      rep.snapshot = snap.str();
    }
  });

  bool pass = true;
  json j;
  j["meta"] = provenance(c.cfg);
  j["sites"] = lattice->sites();
  j["collisions_in_table"] = Q.size();
  auto list = json::array();
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto& rep = reps[r];
    const bool ok = rep.exact && rep.numeric_defect <= 1e-9;
    pass = pass && ok;
    list.push_back({{"replica", r},
                    {"time", rep.time},
                    {"proposals", rep.stats.proposals},
                    {"jumps", rep.stats.jumps},
                    {"collisions", rep.stats.collisions},
                    {"exact_totals_match", rep.exact},
                    {"numeric_total_defect", rep.numeric_defect},
                    {"pass", ok}});
    if (c.cfg.outputs.wants("bin")) {
      auto os = out.open("snapshot_" + std::to_string(r) + ".bin", true);
      os.write(rep.snapshot.data(), static_cast<std::streamsize>(rep.snapshot.size()));
    }
  }
  j["replicas"] = std::move(list);
  j["pass"] = pass;
  if (c.cfg.outputs.wants("csv")) {
    auto os = out.open("trajectory.csv");
    os << csv_preamble(c.cfg) << "replica,frame,t,z1,z2,z3,beta,re,im\n";
    for (const auto& rep : reps) os << rep.rows;
  }
  out.text("simulate_summary.json", dump(j));
  return pass ? kExitPass : kExitFail;
}

int run_static_cov(const Context& c, Artifacts& out) {
  const auto& st = c.cfg.statics;
  constexpr std::size_t kBlock = 500;
  const double eps = 1.0 / st.L;
  const auto lattice = std::make_shared<const Lattice>(Lattice::cube(c.V.dimension(), st.L));
  const FourierProjector proj(*lattice, st.modes, eps);
  const ConservedLookup lookup(c.V);
  const Vec5d m = mean_conserved(c.p);
  const std::size_t blocks = (st.samples + kBlock - 1) / kBlock;
  std::vector<std::vector<CovarianceAccumulator>> acc(blocks, std::vector<CovarianceAccumulator>(st.modes.size()));
  parallel_for(blocks, c.threads, [&](std::size_t b) {
    Rng rng(c.cfg.seed, b);
    auto s = empty_state(lattice);
    const std::size_t n = std::min(kBlock, st.samples - b * kBlock);
    for (std::size_t i = 0; i < n; ++i) {
      resample_product_measure(s, c.p, rng);
      const auto fs = proj(s, lookup, m);
      for (std::size_t k = 0; k < fs.size(); ++k) acc[b][k].add(fs[k].zhat);
    }
  });
  std::vector<CovarianceAccumulator> total(st.modes.size());
  for (const auto& blk : acc)
    for (std::size_t k = 0; k < total.size(); ++k) total[k].merge(blk[k]);

  const Mat5d C = compressibility_matrix(c.p);
  const double scale = std::pow(eps, 3) * std::pow(2.0 * st.L + 1.0, c.V.dimension());
  bool pass = true;
  json j;
  j["meta"] = provenance(c.cfg);
  j["L"] = st.L;
  j["samples"] = st.samples;
  j["normalization"] = scale;
  j["C"] = real_matrix_json(C);
  auto modes = json::array();
  for (std::size_t k = 0; k < total.size(); ++k) {
    const double z = total[k].max_z_score(to_complex(C) * scale);
    pass = pass && z < st.z_max;
    modes.push_back({{"z", mode_json(st.modes[k])}, {"max_abs_z", z}});
  }
  j["modes"] = std::move(modes);
  j["z_max"] = st.z_max;
  j["pass"] = pass;
  if (c.cfg.outputs.wants("csv")) {
    auto os = out.open("static_cov.csv");
    os << csv_preamble(c.cfg);
    write_covariance_csv_header(os);
    for (std::size_t k = 0; k < total.size(); ++k) write_covariance_csv(os, st.modes[k], total[k], scale);
  }
  out.text("static_cov_summary.json", dump(j));
  return pass ? kExitPass : kExitFail;
}

int run_project(const Context& c, Artifacts& out) {
  const auto cs = coefficient_set(c.p);
  const Mat5d C = compressibility_matrix(c.p);
  const auto& sp = c.cfg.spectral;
  const bool hermitian_expected = sp.kind != "full";
  bool pass = true;
  json j;
  j["meta"] = provenance(c.cfg);
  j["diffusion_kind"] = sp.kind;
  auto modes = json::array();
  for (const auto& z : c.cfg.ou.modes) {
    const Vec3d k = k_macro(z, c.cfg.dynamics.L, c.cfg.dynamics.epsilon);
    const auto pd = projected_diffusion(k, cs, sp.diffusion, C, sp.eigen);
    const auto nf = noise_factor(pd.N, C);
    auto rec = mode_record(pd, C, nf);
    rec["z"] = mode_json(z);
    const bool ok = nf.lyapunov_residual < sp.lyapunov_tol &&
                    (!hermitian_expected || nf.hermiticity_defect < sp.hermiticity_tol);
    rec["pass"] = ok;
    pass = pass && ok;
    modes.push_back(std::move(rec));
  }
  j["modes"] = std::move(modes);
  j["pass"] = pass;
  out.text("project.json", dump(j));
  return pass ? kExitPass : kExitFail;
}

int run_ou_sim(const Context& c, Artifacts& out) {
  const auto cs = coefficient_set(c.p);
  const Mat5d C = compressibility_matrix(c.p);
  const auto& ou = c.cfg.ou;
  std::vector<OUReport> reports(ou.modes.size());
  parallel_for(reports.size(), c.threads, [&](std::size_t i) {
    const Vec3d k = k_macro(ou.modes[i], c.cfg.dynamics.L, c.cfg.dynamics.epsilon);
    const auto pd = projected_diffusion(k, cs, c.cfg.spectral.diffusion, C, c.cfg.spectral.eigen);
    Rng rng(c.cfg.seed, i);
    reports[i] = ou_covariance_report(k, pd.N, to_complex(C), ou.delta, ou.lags, ou.replicas, rng);
  });
  bool pass = true;
  json j;
  j["meta"] = provenance(c.cfg);
  j["delta"] = ou.delta;
  j["replicas"] = ou.replicas;
  auto modes = json::array();
  std::ostringstream csv;
  char buf[512];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    auto lags = json::array();
    for (const auto& l : r.lags) {
      lags.push_back({{"steps", l.steps}, {"tau", l.tau}, {"max_abs_z", l.max_z}});
      const Mat5c mu = l.acc.mean();
      const auto se = l.acc.stderr();
      const auto& z = ou.modes[i];
      for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) {
          std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", z[0], z[1],
                        z[2], l.steps, l.tau, a, b, mu(a, b).real(), mu(a, b).imag(), l.predicted(a, b).real(),
                        l.predicted(a, b).imag(), se(a, b), l.acc.count());
          csv << buf;
        }
    }
    const bool ok = r.max_z() < ou.z_max && r.composition_residual < 1e-12;
    pass = pass && ok;
    modes.push_back({{"z", mode_json(ou.modes[i])},
                     {"k", {r.k(0), r.k(1), r.k(2)}},
                     {"composition_residual", r.composition_residual},
                     {"lags", std::move(lags)},
                     {"max_abs_z", r.max_z()},
                     {"pass", ok}});
  }
  j["modes"] = std::move(modes);
  j["z_max"] = ou.z_max;
  j["pass"] = pass;
  if (c.cfg.outputs.wants("csv")) {
    auto os = out.open("ou_lags.csv");
    os << csv_preamble(c.cfg) << "z1,z2,z3,lag,tau,beta,nu,re,im,predicted_re,predicted_im,stderr,nsamples\n"
       << csv.str();
  }
  out.text("ou_summary.json", dump(j));
  return pass ? kExitPass : kExitFail;
}

int run_oracles(const Context& c, Artifacts& out) {
  const auto& oc = c.cfg.oracles;
  std::vector<json> results(oc.systems.size());
  std::vector<char> ok(oc.systems.size(), 0);
  parallel_for(oc.systems.size(), c.threads, [&](std::size_t i) {
    const auto& o = oc.systems[i];
    const exactlab::EnumeratedSystem sys(system_spec(o, c.cfg.varpi));
    const auto p = equilibrium_params(o.n, sys.velocities());
    json desc = {{"dimension", o.dimension}, {"extent", o.extent}, {"periodic", o.periodic}, {"chi", o.chi},
                 {"collisions", o.collisions}, {"n", o.n.n}, {"velocities", json::array()}};
    for (std::size_t v = 0; v < sys.velocities().size(); ++v)
      desc["velocities"].push_back({sys.velocities().component(v, 0), sys.velocities().component(v, 1),
                                    sys.velocities().component(v, 2)});
    auto ids = json::array();
    bool all = true;
    for (const auto& r : exactlab::generator_identities(sys, p, c.cfg.seed, oc.trials, oc.tolerance)) {
      ids.push_back({{"identity", r.name}, {"residual", r.residual}, {"tolerance", r.tolerance}, {"pass", r.pass()}});
      all = all && r.pass();
    }
    ok[i] = all;
    results[i] = {{"name", o.name},
                  {"system_hash", hex64(fnv1a(desc.dump()))},
                  {"system", desc},
                  {"states", sys.states()},
                  {"identities", std::move(ids)},
                  {"pass", all}};
  });
  const bool pass = std::all_of(ok.begin(), ok.end(), [](char x) { return x != 0; });
  json j;
  j["meta"] = provenance(c.cfg);
  j["systems"] = results;
  j["pass"] = pass;
  out.text("oracles.json", dump(j));
  return pass ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice gas fluctuation toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
  app.add_option("--config", config_path, "Configuration file (JSON)")->required();
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out", out_dir, "Output directory (overrides outputs.directory)");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  using Runner = int (*)(const Context&, Artifacts&);
  const std::vector<std::tuple<const char*, const char*, Runner>> commands{
      {"coefficients", "Equilibrium brackets and transport coefficients", run_coefficients},
      {"simulate", "Simulate the lattice gas and record Fourier fluctuations", run_simulate},
      {"static-cov", "Sample the product measure and compare fluctuation covariances with C", run_static_cov},
      {"project", "Projected diffusion, noise factor and Lyapunov residual per mode", run_project},
      {"ou-sim", "Exact OU transitions and lagged covariances per mode", run_ou_sim},
      {"oracles", "Exact generator identities on enumerated toy systems", run_oracles}};
  Runner runner = nullptr;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&runner, f = fn] { runner = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfig;
  }

  try {
    Context ctx;
    ctx.cfg = load_config(config_path, seed);
    ctx.threads = threads;
    ctx.V = ctx.cfg.velocities();
    ctx.p = equilibrium_params(ctx.cfg.n, ctx.V);
    Artifacts out(out_dir.empty() ? fs::path(ctx.cfg.outputs.directory) : fs::path(out_dir));
    const int code = runner(ctx, out);
    out.commit();
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
