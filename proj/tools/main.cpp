#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "comember/diagnostics.hpp"
#include "comember/marginal_filter.hpp"
#include "comember/pairwise_filter.hpp"
#include "comember/service.hpp"
#include "comember/utility.hpp"

using namespace comember;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error("input file not found: " + path);
}

// Run manifest: <dir>/<name>.json holds the config and its hash. A rerun with the same
// hash and all outputs present is a no-op.
struct Manifest {
  fs::path path;
  json config;
  std::string hash;
  std::vector<fs::path> outputs;

  Manifest(fs::path dir, const std::string& name, json cfg)
      : path(dir / (name + ".json")), config(std::move(cfg)), hash(content_hash(config.dump())) {}

  bool cached() const {
    if (!fs::exists(path)) return false;
    try {
      auto j = json::parse(read_file(path));
      if (j.value("config_hash", "") != hash) return false;
    } catch (const std::exception&) {
      return false;
    }
    for (const auto& o : outputs)
      if (!fs::exists(o)) return false;
    return true;
  }

  void commit(const json& extra = json::object()) const {
    json j{{"config_hash", hash}, {"config", config}, {"outputs", json::array()}};
    for (const auto& o : outputs) j["outputs"].push_back(o.filename().string());
    if (!extra.empty()) j["result"] = extra;
    write_file_atomic(path, j.dump(2) + "\n");
  }
};

struct PvwFlags {
  std::string method = "hat";
  std::size_t n_max = 2000;
  unsigned threads = 0;
  std::size_t m = 2;
  double p_in = 0.5, p_out = 0.1;
  bool integrate_prior = false;
  std::size_t sweeps = 20000, burn_in = 2000;

  void add(CLI::App* app) {
    app->add_option("--method", method, "hat | integral | bruteforce | gibbs")
        ->check(CLI::IsMember({"hat", "integral", "bruteforce", "gibbs"}));
    app->add_option("--n-max", n_max, "size guard for the integral method");
    app->add_option("--threads", threads, "worker threads (0: all cores)");
    app->add_option("--m", m, "communities (bruteforce, gibbs)");
    app->add_option("--p-in", p_in, "within-community edge probability (bruteforce, gibbs)");
    app->add_option("--p-out", p_out, "between-community edge probability (bruteforce, gibbs)");
    app->add_flag("--integrate-prior", integrate_prior, "bruteforce: integrate over the parameter prior");
    app->add_option("--sweeps", sweeps, "gibbs sweeps");
    app->add_option("--burn-in", burn_in, "gibbs burn-in sweeps");
  }

  PvwConfig config(std::uint64_t seed) const {
    PvwConfig c;
    c.method = method;
    c.n_max = n_max;
    c.threads = threads;
    c.m = m;
    c.p_in = p_in;
    c.p_out = p_out;
    c.integrate_prior = integrate_prior;
    c.sweeps = sweeps;
    c.burn_in = burn_in;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct PvwArtifact {
  LoadedGraph loaded;
  PvwMatrix pvw;
  std::string hash;
};

// shared by pvw, detect and hierarchy; cached by config hash in the output directory
PvwArtifact obtain_pvw(const std::string& edges, const PvwConfig& cfg, const fs::path& out) {
  require_file(edges);
  auto text = read_file(edges);
  PvwArtifact art;
  art.loaded = load_edge_list(text);
  require_simple(art.loaded.graph);
  if (cfg.method == "integral" && art.loaded.graph.node_count() > cfg.n_max)
    throw SizeGuardError("integral method: n = " + std::to_string(art.loaded.graph.node_count()) +
                         " exceeds --n-max " + std::to_string(cfg.n_max));
  if (cfg.method == "bruteforce" && art.loaded.graph.node_count() > 10)
    throw SizeGuardError("bruteforce method limited to n <= 10");
  auto stem = fs::path(edges).stem().string();
  Manifest man(out, stem + ".pvw", {{"input", content_hash(text)}, {"pvw", cfg.to_json()}});
  man.outputs.push_back(out / (stem + ".pvw"));
  if (cfg.method == "hat" || cfg.method == "integral") man.outputs.push_back(out / (stem + ".triples.csv"));
  art.hash = man.hash;
  std::cout << "pvw config hash " << man.hash;
  if (man.cached()) {
    std::cout << " (cache hit)\n";
    art.pvw = PvwMatrix::read(man.outputs[0].string());
    return art;
  }
  std::cout << "\n";
  auto t0 = std::chrono::steady_clock::now();
  auto run = compute_pvw(art.loaded.graph, cfg);
  double secs = seconds_since(t0);
  fs::create_directories(out);
  run.pvw.metadata["config_hash"] = man.hash;
  run.pvw.metadata["config"] = cfg.to_json();
  run.pvw.write(man.outputs[0].string());
  if (run.triples) {
    std::ostringstream csv;
    run.triples->write_csv(csv);
    write_file_atomic(man.outputs[1], csv.str());
  }
  run.stats["wall_seconds"] = secs;
  man.commit(run.stats);
  std::cout << "pvw " << cfg.method << " on n=" << art.loaded.graph.node_count()
            << " edges=" << art.loaded.graph.edge_count() << " in " << secs << " s\n";
  art.pvw = std::move(run.pvw);
  return art;
}

NodeId internal_id(const LoadedGraph& g, long long ext) {
  auto it = std::lower_bound(g.original_ids.begin(), g.original_ids.end(), ext);
  if (it == g.original_ids.end() || *it != ext) throw Error("unknown node id " + std::to_string(ext));
  return static_cast<NodeId>(it - g.original_ids.begin());
}

// "id label" per line
Partition read_truth(const std::string& path, const LoadedGraph& g) {
  require_file(path);
  std::ifstream in(path);
  std::vector<long long> label(g.graph.node_count(), -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long id, c;
    if (!(ls >> id)) continue;
    if (!(ls >> c)) throw ParseError(lineno, "expected 'id community'");
    label[internal_id(g, id)] = c;
  }
  for (auto l : label)
    if (l < 0) throw Error("truth file does not label every node");
  return Partition::from_labels(label);
}

void write_partition(const fs::path& path, const Partition& p, const LoadedGraph& g) {
  std::ostringstream out;
  for (NodeId v = 0; v < p.node_count(); ++v) out << g.original_ids[v] << ' ' << p.block_of(v) + 1 << '\n';
  write_file_atomic(path, out.str());
}

// input: one vector per snapshot; image rows are series, columns are snapshots
std::string series_image(const std::vector<std::vector<double>>& rows) {
  std::size_t h = rows.empty() ? 0 : rows.front().size(), w = rows.size();
  std::string img = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t t = 0; t < h; ++t)
    for (std::size_t k = 0; k < w; ++k)
      img.push_back(static_cast<char>(std::lround(255.0 * (1.0 - std::clamp(rows[k][t], 0.0, 1.0)))));
  return img;
}

struct SeriesWriter {
  std::ostringstream csv;
  std::vector<std::vector<double>> cols;  // transposed: one vector per snapshot

  explicit SeriesWriter(const std::vector<std::string>& header) {
    csv.precision(12);
    csv << "t";
    for (const auto& h : header) csv << ',' << h;
    csv << '\n';
  }
  void row(double t, const std::vector<double>& xs) {
    csv << t;
    for (double x : xs) csv << ',' << x;
    csv << '\n';
    cols.push_back(xs);
  }
  void save(const fs::path& csv_path, const fs::path& pgm_path) const {
    write_file_atomic(csv_path, csv.str());
    write_file_atomic(pgm_path, series_image(cols));
  }
};

std::vector<std::string> pair_header(std::size_t n) {
  std::vector<std::string> h;
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) h.push_back("p_" + std::to_string(v + 1) + "_" + std::to_string(w + 1));
  return h;
}

std::vector<std::string> marginal_header(std::size_t n, std::size_t m) {
  std::vector<std::string> h;
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t i = 0; i < m; ++i) h.push_back("v" + std::to_string(v + 1) + "_c" + std::to_string(i + 1));
  return h;
}

int run_pvw(const std::string& edges, const PvwFlags& flags, const std::vector<std::string>& pairs, std::uint64_t seed,
            const std::string& out) {
  auto art = obtain_pvw(edges, flags.config(seed), out);
  for (const auto& s : pairs) {
    long long a, b;
    char comma;
    std::istringstream ps(s);
    if (!(ps >> a >> comma >> b) || comma != ',') throw Error("--pair expects 'v,w'");
    NodeId v = internal_id(art.loaded, a), w = internal_id(art.loaded, b);
    std::printf("p{%lld,%lld} = %.6f\n", a, b, art.pvw(v, w));
  }
  return 0;
}

int run_detect(const std::string& edges, const PvwFlags& flags, double theta, bool sweep, const std::string& truth,
               std::size_t grid, std::uint64_t seed, const std::string& out) {
  if (sweep && truth.empty()) throw Error("--sweep needs --truth: the sweep scores each theta by NMI");
  if (!truth.empty()) require_file(truth);
  check_theta(theta);
  auto art = obtain_pvw(edges, flags.config(seed), out);
  auto stem = fs::path(edges).stem().string();
  json cfg{{"pvw", art.hash}, {"theta", theta}, {"sweep", sweep}, {"grid", grid}, {"seed", seed}};
  if (!truth.empty()) cfg["truth"] = content_hash(read_file(truth));
  Manifest man(out, stem + ".detect", cfg);
  man.outputs.push_back(fs::path(out) / (stem + ".partition"));
  if (sweep) man.outputs.push_back(fs::path(out) / (stem + ".sweep.csv"));
  if (man.cached()) {
    std::cout << "detect config hash " << man.hash << " (cache hit)\n";
    std::cout << read_file(man.path);
    return 0;
  }
  std::cout << "detect config hash " << man.hash << "\n";
  std::optional<Partition> truth_p;
  if (!truth.empty()) truth_p = read_truth(truth, art.loaded);
  json result;
  Partition best;
  if (sweep) {
    auto res = theta_sweep(art.pvw, *truth_p, theta_grid(grid), seed);
    std::ostringstream csv;
    csv << "theta,nmi,expected_utility,blocks\n";
    csv.precision(12);
    for (const auto& p : res.curve) csv << p.theta << ',' << p.nmi << ',' << p.expected_utility << ',' << p.blocks << '\n';
    write_file_atomic(man.outputs[1], csv.str());
    best = res.best_partition;
    result = {{"best_theta", res.best_theta}, {"nmi", res.best_nmi},
              {"expected_utility", expected_utility(best, art.pvw, res.best_theta)}};
  } else {
    auto res = optimize_partition(art.pvw, theta, seed);
    best = res.partition;
    result = {{"theta", theta}, {"expected_utility", res.expected_utility}};
    if (truth_p) result["nmi"] = nmi(best, *truth_p);
  }
  result["blocks"] = best.block_count();
  write_partition(man.outputs[0], best, art.loaded);
  man.commit(result);
  std::cout << result.dump(2) << "\n";
  return 0;
}

int run_hierarchy(const std::string& edges, const PvwFlags& flags, std::optional<double> merge,
                  std::optional<double> community, Thresholds th, std::uint64_t seed, const std::string& out) {
  auto art = obtain_pvw(edges, flags.config(seed), out);
  auto stem = fs::path(edges).stem().string();
  json cfg{{"pvw", art.hash}, {"blue", th.blue}, {"red", th.red}};
  if (merge) cfg["merge"] = *merge;
  if (community) cfg["community"] = *community;
  Manifest man(out, stem + ".hierarchy", cfg);
  man.outputs = {fs::path(out) / (stem + ".dendrogram.json"), fs::path(out) / (stem + ".matrix.pgm")};
  if (merge) man.outputs.push_back(fs::path(out) / (stem + ".coarse.json"));
  if (man.cached()) {
    std::cout << "hierarchy config hash " << man.hash << " (cache hit)\n";
    return 0;
  }
  std::cout << "hierarchy config hash " << man.hash << "\n";
  auto d = distance_matrix(art.pvw);
  auto dg = order_leaves(average_linkage(d), d);
  write_file_atomic(man.outputs[0], dg.to_json(art.loaded.original_ids).dump() + "\n");
  write_file_atomic(man.outputs[1], render_matrix(art.pvw, dg.leaf_order()));
  json result{{"root_height", dg.root_height()}};
  if (merge) {
    auto cv = coarse_grain(art.loaded.graph, art.pvw, dg, *merge, *community, th);
    write_file_atomic(man.outputs[2], cv.to_json(art.loaded.original_ids).dump(2) + "\n");
    result["meta_nodes"] = cv.meta_nodes.size();
    result["communities"] = cv.communities.size();
  }
  man.commit(result);
  std::cout << result.dump(2) << "\n";
  return 0;
}

struct TrackFlags {
  std::string model = "planted";
  std::string params_file, timeline_file;
  DynamicPlantedParams planted{3, 2, 1, 3, 1, 1, 3};
  double horizon = 5, cadence = 0.1;
  std::string filter = "full";
  std::string closure = "maxent";
  std::string oracle = "full";
  std::string integrator = "dopri";
  double rtol = 1e-10, atol = 1e-14, split = 0.005;
  bool empty_start = false;
  double burn_in = 0.25;
  std::size_t bins = 40;

  json to_json() const {
    json j{{"filter", filter}, {"cadence", cadence}, {"integrator", integrator}, {"rtol", rtol}, {"atol", atol}};
    if (integrator == "strang") j["split"] = split;
    if (filter == "pairwise") j["closure"] = closure;
    if (filter == "marginal") j["oracle"] = oracle;
    if (filter == "diagnostics") j.update({{"burn_in", burn_in}, {"bins", bins}});
    return j;
  }
  FilterIntegration integration() const {
    FilterIntegration fi;
    fi.method = integrator == "strang" ? FilterIntegration::Method::Strang : FilterIntegration::Method::Dopri;
    fi.ode.rel_tol = rtol;
    fi.ode.abs_tol = atol;
    fi.split_step = split;
    return fi;
  }
};

int run_track(TrackFlags f, std::uint64_t seed, const std::string& out) {
  EventTimeline tl;
  json source;
  if (!f.timeline_file.empty()) {
    require_file(f.timeline_file);
    std::ifstream in(f.timeline_file);
    tl = EventTimeline::read(in);
    source = {{"timeline", content_hash(read_file(f.timeline_file))}};
  } else {
    InitialDraw init;
    if (f.empty_start) init.graph = InitialDraw::GraphStart::Empty;
    if (f.model == "planted") {
      f.planted.validate();
      tl = simulate(f.planted, init, f.horizon, seed);
    } else {
      require_file(f.params_file);
      auto j = json::parse(read_file(f.params_file));
      auto p = DynamicBlockParams::from_json(j.at("params"));
      tl = simulate(p, j.at("n").get<std::size_t>(), init, f.horizon, seed);
    }
    source = {{"params", tl.params}, {"n", tl.n}, {"horizon", f.horizon}, {"seed", seed},
              {"empty_start", f.empty_start}};
  }
  const bool planted = tl.params.value("model", "") == "planted";
  Manifest man(out, "track-" + f.filter, {{"source", source}, {"run", f.to_json()}});
  man.outputs.push_back(fs::path(out) / "timeline.txt");
  auto outp = [&](const std::string& name) {
    man.outputs.push_back(fs::path(out) / name);
    return man.outputs.back();
  };
  std::cout << "track config hash " << man.hash;
  // declare outputs before the cache check
  std::vector<fs::path> files;
  if (f.filter == "full") files = {outp("full_states.csv"), outp("full_states.pgm"), outp("full_marginals.csv"),
                                   outp("full_marginals.pgm")};
  else if (f.filter == "marginal") files = {outp("marginals.csv"), outp("marginals.pgm")};
  else if (f.filter == "pairwise") files = {outp("comembership.csv"), outp("comembership.pgm"), outp("clamps.csv")};
  else if (f.filter == "verify") files = {outp("verify.csv")};
  else if (f.filter == "diagnostics") files = {outp("diagnostics.json")};
  else if (f.filter != "none") throw Error("unknown filter " + f.filter);
  if (man.cached()) {
    std::cout << " (cache hit)\n";
    auto j = json::parse(read_file(man.path));
    if (j.contains("result")) std::cout << j["result"].dump(2) << "\n";
    return 0;
  }
  std::cout << "\n";
  fs::create_directories(out);
  {
    std::ostringstream ts;
    tl.write(ts);
    write_file_atomic(man.outputs[0], ts.str());
  }
  const std::size_t n = tl.n, m = tl.m;
  json result{{"events", tl.events.size()}, {"flips", tl.count(TimelineEvent::Kind::Flip)},
              {"hops", tl.count(TimelineEvent::Kind::Hop)}};
  auto block = timeline_params(tl);
  auto fi = f.integration();
  auto t0 = std::chrono::steady_clock::now();

  if (f.filter == "full") {
    FullFilter ff(block, n, tl.initial_types);
    bool states = ff.state_count() <= 4096;
    std::vector<std::string> sh;
    if (states)
      for (std::size_t s = 0; s < ff.state_count(); ++s) {
        std::string name = "phi_";
        for (NodeId v = 0; v < n; ++v) name += std::to_string(ff.digit(s, v) + 1);
        sh.push_back(name);
      }
    SeriesWriter sw(sh), mw(marginal_header(n, m));
    drive_filter(ff, tl, f.cadence, [&](double dt) { ff.predict(dt, fi); }, [&](double t) {
      if (states) sw.row(t, ff.distribution());
      mw.row(t, ff.node_marginals());
    });
    sw.save(files[0], files[1]);
    mw.save(files[2], files[3]);
    result["states"] = ff.state_count();
    result["log_evidence"] = ff.log_evidence();
  } else if (f.filter == "marginal") {
    std::shared_ptr<MarginalOracle> oracle;
    if (f.oracle == "full") oracle = std::make_shared<FullFilterOracle>(block, n, tl.initial_types);
    else if (f.oracle == "independence") oracle = std::make_shared<IndependenceOracle>(m);
    else throw Error("unknown oracle " + f.oracle);
    MarginalFilter mf(block, n, tl.initial_types, oracle);
    SeriesWriter mw(marginal_header(n, m));
    drive_filter(mf, tl, f.cadence, [&](double dt) { mf.predict(dt, fi.ode); },
                 [&](double t) { mw.row(t, mf.marginals()); });
    mw.save(files[0], files[1]);
    result["warnings"] = mf.warnings().size();
  } else if (f.filter == "pairwise") {
    if (!planted) throw Error("pairwise filter needs a planted model");
    auto pp = DynamicPlantedParams::from_json(tl.params);
    std::shared_ptr<PairClosure> closure;
    if (f.closure == "maxent") closure = std::make_shared<MaxEntClosure>(n, m);
    else if (f.closure == "independent") closure = std::make_shared<IndependentClosure>();
    else if (f.closure == "exact") closure = std::make_shared<FullFilterClosure>(block, n, tl.initial_types);
    else throw Error("unknown closure " + f.closure);
    PairwiseFilter pf(pp, tl.initial_types, closure);
    SeriesWriter pw(pair_header(n));
    drive_filter(pf, tl, f.cadence, [&](double dt) { pf.predict(dt, fi.ode); },
                 [&](double t) { pw.row(t, pf.comembership()); });
    pw.save(files[0], files[1]);
    std::ostringstream clamps;
    clamps.precision(12);
    clamps << "t,v,w,value\n";
    for (const auto& c : pf.clamp_log()) clamps << c.time << ',' << c.v + 1 << ',' << c.w + 1 << ',' << c.value << '\n';
    write_file_atomic(files[2], clamps.str());
    result["clamps"] = pf.clamp_log().size();
  } else if (f.filter == "verify") {
    // marginal filter with the full-filter oracle against direct marginalization
    FullFilter ff(block, n, tl.initial_types);
    MarginalFilter mf(block, n, tl.initial_types, std::make_shared<FullFilterOracle>(block, n, tl.initial_types));
    std::vector<std::vector<double>> direct, tracked;
    std::vector<double> times;
    drive_filter(ff, tl, f.cadence, [&](double dt) { ff.predict(dt, fi); }, [&](double t) {
      times.push_back(t);
      direct.push_back(ff.node_marginals());
    });
    drive_filter(mf, tl, f.cadence, [&](double dt) { mf.predict(dt, fi.ode); },
                 [&](double) { tracked.push_back(mf.marginals()); });
    double worst = 0;
    std::ostringstream csv;
    csv.precision(12);
    csv << "t,max_abs_error\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
      double e = 0;
      for (std::size_t i = 0; i < direct[k].size(); ++i) e = std::max(e, std::fabs(direct[k][i] - tracked[k][i]));
      csv << times[k] << ',' << e << '\n';
      worst = std::max(worst, e);
    }
    write_file_atomic(files[0], csv.str());
    result["max_marginal_discrepancy"] = worst;
    std::printf("max marginal discrepancy %.3e\n", worst);
  } else if (f.filter == "diagnostics") {
    if (!planted) throw Error("diagnostics need a planted model");
    DiagnosticsOptions opt;
    opt.cadence = f.cadence;
    opt.burn_in = f.burn_in;
    opt.bins = f.bins;
    opt.integration = fi;
    auto d = closure_diagnostics(DynamicPlantedParams::from_json(tl.params), tl, opt);
    auto j = d.to_json(f.bins);
    write_file_atomic(files[0], j.dump(2) + "\n");
    for (const char* k : {"R_I", "R_O", "S_I", "S_O"}) result[std::string("mean_") + k] = j[k]["summary"]["mean"];
  }
  result["seconds"] = seconds_since(t0);
  man.commit(result);
  std::cout << result.dump(2) << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const std::string& workspace, const std::string& host, int port) {
  if (!fs::is_directory(workspace)) throw Error("workspace directory does not exist: " + workspace);
  Service svc(workspace);
  int bound = svc.bind(host, port);
  g_server = &svc.server();
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "serving " << workspace << " on http://" << host << ":" << bound << std::endl;
  svc.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"comember: co-membership probabilities, detection, hierarchy and tracking"};
  app.require_subcommand(1);
  std::uint64_t seed = kDefaultSeed;
  std::string out = "comember-out";
  app.add_option("--seed", seed, "random seed (default 1)");

  PvwFlags pvw_flags;
  std::string edges;
  std::vector<std::string> pairs;
  auto* pvw = app.add_subcommand("pvw", "co-membership probability matrix and triple statistics");
  pvw->add_option("edges", edges, "edge list")->required();
  pvw_flags.add(pvw);
  pvw->add_option("--pair", pairs, "print p for node pair 'v,w' (file ids)");
  pvw->add_option("--out", out, "output directory");

  double theta = 0.5;
  bool sweep = false;
  std::string truth;
  std::size_t grid = 41;
  auto* detect = app.add_subcommand("detect", "partition maximizing expected utility");
  detect->add_option("edges", edges, "edge list")->required();
  pvw_flags.add(detect);
  detect->add_option("--theta", theta, "utility threshold");
  detect->add_flag("--sweep", sweep, "sweep theta over a grid, scored by NMI against --truth");
  detect->add_option("--truth", truth, "ground truth 'id community' file");
  detect->add_option("--grid", grid, "theta grid points")->check(CLI::Range(1, 10001));
  detect->add_option("--out", out, "output directory");

  std::optional<double> merge, community;
  Thresholds th;
  auto* hier = app.add_subcommand("hierarchy", "dendrogram, ordered matrix image and coarse view");
  hier->add_option("edges", edges, "edge list")->required();
  pvw_flags.add(hier);
  auto* merge_opt = hier->add_option("--merge", merge, "merge level for meta-nodes");
  auto* comm_opt = hier->add_option("--community", community, "community level");
  merge_opt->needs(comm_opt);
  comm_opt->needs(merge_opt);
  hier->add_option("--blue", th.blue, "averaged p above which meta-edges are blue");
  hier->add_option("--red", th.red, "averaged p below which meta-edges are red");
  hier->add_option("--out", out, "output directory");

  TrackFlags tf;
  auto* track = app.add_subcommand("track", "simulate a dynamic model and run a filter");
  track->add_option("--model", tf.model, "planted | block")->check(CLI::IsMember({"planted", "block"}));
  track->add_option("--params", tf.params_file, "block model JSON {\"n\":..,\"params\":{..}}");
  track->add_option("--timeline", tf.timeline_file, "replay a timeline instead of simulating");
  track->add_option("--n", tf.planted.n, "nodes");
  track->add_option("--m", tf.planted.m, "communities");
  track->add_option("--a", tf.planted.a, "community hop rate");
  track->add_option("--lambda-in", tf.planted.lambda_I, "edge birth rate within");
  track->add_option("--mu-in", tf.planted.mu_I, "edge death rate within");
  track->add_option("--lambda-out", tf.planted.lambda_O, "edge birth rate between");
  track->add_option("--mu-out", tf.planted.mu_O, "edge death rate between");
  track->add_option("--horizon", tf.horizon, "simulated time");
  track->add_flag("--empty-start", tf.empty_start, "start from the empty graph");
  track->add_option("--cadence", tf.cadence, "snapshot spacing");
  track->add_option("--filter", tf.filter, "none | full | marginal | pairwise | verify | diagnostics")
      ->check(CLI::IsMember({"none", "full", "marginal", "pairwise", "verify", "diagnostics"}));
  track->add_option("--closure", tf.closure, "pairwise closure: maxent | independent | exact")
      ->check(CLI::IsMember({"maxent", "independent", "exact"}));
  track->add_option("--oracle", tf.oracle, "marginal oracle: full | independence")
      ->check(CLI::IsMember({"full", "independence"}));
  track->add_option("--integrator", tf.integrator, "dopri | strang")->check(CLI::IsMember({"dopri", "strang"}));
  track->add_option("--rtol", tf.rtol, "relative tolerance");
  track->add_option("--atol", tf.atol, "absolute tolerance");
  track->add_option("--split-step", tf.split, "splitting step for --integrator strang");
  track->add_option("--burn-in", tf.burn_in, "diagnostics: skip snapshots before this time");
  track->add_option("--bins", tf.bins, "diagnostics: histogram bins");
  track->add_option("--out", out, "output directory");

  std::string workspace = "workspace", host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP API over a workspace");
  serve->add_option("--workspace", workspace, "workspace directory")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0: any free port)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!serve->parsed()) std::cout << "seed " << seed << "\n";
    if (pvw->parsed()) return run_pvw(edges, pvw_flags, pairs, seed, out);
    if (detect->parsed()) return run_detect(edges, pvw_flags, theta, sweep, truth, grid, seed, out);
    if (hier->parsed()) return run_hierarchy(edges, pvw_flags, merge, community, th, seed, out);
    if (track->parsed()) return run_track(tf, seed, out);
    if (serve->parsed()) return run_serve(workspace, host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
