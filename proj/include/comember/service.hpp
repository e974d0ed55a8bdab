#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "comember/batch.hpp"
#include "comember/exact.hpp"
#include "comember/hierarchy.hpp"
#include "comember/pvw_integral.hpp"

namespace comember {

namespace fs = std::filesystem;

// FNV-1a; stable across platforms, which std::hash is not
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string content_hash(std::string_view s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// write to a sibling temp file and rename, so readers never see partial output
inline fs::path temp_sibling(const fs::path& p) {
  auto tmp = p;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  return tmp;
}

inline void write_file_atomic(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  auto tmp = temp_sibling(p);
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << data;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

struct PvwConfig {
  std::string method = "hat";  // hat | integral | bruteforce | gibbs
  std::size_t n_max = 2000;    // integral cost guard
  unsigned threads = 0;        // not part of the hash
  // bruteforce and gibbs model
  std::size_t m = 2;
  double p_in = 0.5, p_out = 0.1;
  bool integrate_prior = false;  // bruteforce: average over the parameter prior instead
  std::size_t sweeps = 20000, burn_in = 2000;
  std::uint64_t seed = 1;

  void validate() const {
    if (method != "hat" && method != "integral" && method != "bruteforce" && method != "gibbs")
      throw Error("unknown pvw method '" + method + "'");
    if (method == "gibbs" || (method == "bruteforce" && !integrate_prior))
      PlantedParams{0, m, p_in, p_out}.validate();
    if (method == "gibbs" && sweeps <= burn_in) throw Error("gibbs: sweeps must exceed burn_in");
  }

  // only the fields that change the output
  nlohmann::json to_json() const {
    nlohmann::json j{{"method", method}};
    if (method == "integral") j["n_max"] = n_max;
    if (method == "bruteforce") {
      j["integrate_prior"] = integrate_prior;
      if (!integrate_prior) j.update({{"m", m}, {"p_in", p_in}, {"p_out", p_out}});
    }
    if (method == "gibbs")
      j.update({{"m", m}, {"p_in", p_in}, {"p_out", p_out}, {"sweeps", sweeps}, {"burn_in", burn_in}, {"seed", seed}});
    return j;
  }

  static PvwConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("pvw config must be a JSON object");
    PvwConfig c;
    try {
      c.method = j.value("method", c.method);
      c.n_max = j.value("n_max", c.n_max);
      c.threads = j.value("threads", c.threads);
      c.m = j.value("m", c.m);
      c.p_in = j.value("p_in", c.p_in);
      c.p_out = j.value("p_out", c.p_out);
      c.integrate_prior = j.value("integrate_prior", c.integrate_prior);
      c.sweeps = j.value("sweeps", c.sweeps);
      c.burn_in = j.value("burn_in", c.burn_in);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("pvw config: ") + e.what());
    }
    c.validate();
    return c;
  }

  std::string hash(const std::string& graph_hash) const { return content_hash(graph_hash + "|" + to_json().dump()); }
};

struct PvwRun {
  PvwMatrix pvw;
  std::optional<TripleCache> triples;  // hat and integral only
  nlohmann::json stats;
};

inline PvwRun compute_pvw(const Graph& g, const PvwConfig& c) {
  c.validate();
  auto start = std::chrono::steady_clock::now();
  PvwRun run;
  if (c.method == "hat" || c.method == "integral") {
    BatchOptions opt;
    opt.threads = c.threads;
    opt.collect_counts = true;
    opt.method = c.method;
    if (c.method == "integral") {
      if (g.node_count() > c.n_max) throw SizeGuardError("integral method: n exceeds n_max");
      MPriorSpec spec;
      spec.max_n = c.n_max;
      opt.estimator = [spec](const PairEvidence& e) { return pvw_integral(e, spec); };
    }
    auto res = pvw_matrix_batch(g, opt);
    run.pvw = std::move(res.pvw);
    run.triples = std::move(res.cache);
    run.stats = {{"explicit_pairs", res.stats.explicit_pairs},
                 {"distinct_triples", res.stats.distinct_triples},
                 {"sum_n2", res.stats.sum_n2},
                 {"threads", res.stats.threads}};
  } else if (c.method == "bruteforce") {
    PlantedParams p{g.node_count(), c.m, c.p_in, c.p_out};
    run.pvw = c.integrate_prior ? exact_pvw_bruteforce(g, p, PriorIntegration{}) : exact_pvw_bruteforce(g, p);
    run.pvw.metadata["method"] = "bruteforce";
  } else {
    PlantedParams p{g.node_count(), c.m, c.p_in, c.p_out};
    auto est = gibbs_pvw_montecarlo(g, p, c.sweeps, c.burn_in, c.seed);
    run.pvw = std::move(est.pvw);
    run.pvw.metadata["method"] = "gibbs";
    double worst = 0;
    for (double s : est.std_error) worst = std::max(worst, s);
    run.stats = {{"batches", est.batches}, {"max_std_error", worst}};
  }
  run.stats["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

struct GraphRecord {
  std::string id, name;
  std::size_t nodes = 0, edges = 0;
  int edge_types = 2;

  nlohmann::json to_json() const {
    return {{"id", id}, {"name", name}, {"nodes", nodes}, {"edges", edges}, {"edge_types", edge_types}};
  }
  static GraphRecord from_json(const nlohmann::json& j) {
    return {j.at("id"), j.at("name"), j.at("nodes"), j.at("edges"), j.at("edge_types")};
  }
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// On-disk store. Graphs are keyed by the hash of their edge list, pvw artifacts by
// the hash of (graph, config), so repeated requests are cache hits.
//   <root>/graphs/<id>/edges.txt, graph.json, current
//   <root>/graphs/<id>/pvw/<hash>.pvw, .json, .triples.csv, .dendrogram.json
class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "graphs"); }

  const fs::path& root() const { return root_; }

  std::vector<GraphRecord> list_graphs() const {
    std::vector<GraphRecord> out;
    for (const auto& d : fs::directory_iterator(root_ / "graphs")) {
      auto meta = d.path() / "graph.json";
      if (fs::exists(meta)) out.push_back(GraphRecord::from_json(nlohmann::json::parse(read_file(meta))));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  // idempotent: the same text gives the same id
  GraphRecord add_graph(const std::string& text, const std::string& name = "") {
    auto loaded = load_edge_list(text);
    require_simple(loaded.graph);
    GraphRecord rec;
    rec.id = content_hash(text);
    rec.name = name.empty() ? rec.id : name;
    rec.nodes = loaded.graph.node_count();
    rec.edges = loaded.graph.edge_count();
    rec.edge_types = loaded.graph.edge_types();
    std::lock_guard lock(mu_);
    auto dir = graph_dir(rec.id);
    if (fs::exists(dir / "graph.json")) return GraphRecord::from_json(nlohmann::json::parse(read_file(dir / "graph.json")));
    write_file_atomic(dir / "edges.txt", text);
    write_file_atomic(dir / "graph.json", rec.to_json().dump(2) + "\n");
    return rec;
  }

  bool has_graph(const std::string& id) const {
    return valid_id(id) && fs::exists(graph_dir(id) / "graph.json");
  }

  GraphRecord graph_record(const std::string& id) const {
    require_graph(id);
    return GraphRecord::from_json(nlohmann::json::parse(read_file(graph_dir(id) / "graph.json")));
  }

  LoadedGraph load_graph(const std::string& id) const {
    require_graph(id);
    return load_edge_list(read_file(graph_dir(id) / "edges.txt"));
  }

  std::string config_hash(const std::string& id, const PvwConfig& c) const { return c.hash(id); }

  bool has_pvw(const std::string& id, const std::string& hash) const {
    return has_graph(id) && valid_id(hash) && fs::exists(pvw_base(id, hash).replace_extension(".json"));
  }

  struct PvwResult {
    std::string hash;
    bool cached = false;
    nlohmann::json meta;
  };

  // computes unless an artifact with the same config hash exists; marks it current either way
  PvwResult ensure_pvw(const std::string& id, const PvwConfig& c) {
    require_graph(id);
    PvwResult r{c.hash(id), false, {}};
    auto base = pvw_base(id, r.hash);
    auto meta_path = fs::path(base).replace_extension(".json");
    if (fs::exists(meta_path)) {
      r.cached = true;
    } else {
      auto loaded = load_graph(id);
      auto run = compute_pvw(loaded.graph, c);
      run.pvw.metadata["config_hash"] = r.hash;
      run.pvw.metadata["config"] = c.to_json();
      run.pvw.metadata["graph"] = id;
      auto mat = fs::path(base).replace_extension(".pvw");
      fs::create_directories(mat.parent_path());
      run.pvw.write(temp_sibling(mat).string());
      fs::rename(temp_sibling(mat), mat);
      if (run.triples) {
        std::ostringstream csv;
        run.triples->write_csv(csv);
        write_file_atomic(fs::path(base).replace_extension(".triples.csv"), csv.str());
      }
      nlohmann::json meta{{"config_hash", r.hash}, {"graph", id}, {"config", c.to_json()}, {"stats", run.stats}};
      write_file_atomic(meta_path, meta.dump(2) + "\n");
    }
    r.meta = nlohmann::json::parse(read_file(meta_path));
    std::lock_guard lock(mu_);
    write_file_atomic(graph_dir(id) / "current", r.hash + "\n");
    return r;
  }

  std::optional<std::string> current_pvw(const std::string& id) const {
    require_graph(id);
    auto p = graph_dir(id) / "current";
    if (!fs::exists(p)) return std::nullopt;
    auto s = read_file(p);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
  }

  std::string require_current(const std::string& id) const {
    auto h = current_pvw(id);
    if (!h) throw NotFoundError("no pvw matrix has been computed for graph " + id);
    return *h;
  }

  PvwMatrix load_pvw(const std::string& id, const std::string& hash) const {
    if (!has_pvw(id, hash)) throw NotFoundError("unknown pvw artifact " + hash);
    return PvwMatrix::read(fs::path(pvw_base(id, hash)).replace_extension(".pvw").string());
  }

  // ordered average-linkage dendrogram, cached next to the matrix
  Dendrogram dendrogram(const std::string& id, const std::string& hash) const {
    auto pvw = load_pvw(id, hash);
    auto d = distance_matrix(pvw);
    return order_leaves(average_linkage(d), d);
  }

  std::string dendrogram_json(const std::string& id, const std::string& hash) const {
    auto path = fs::path(pvw_base(id, hash)).replace_extension(".dendrogram.json");
    if (fs::exists(path)) return read_file(path);
    auto ids = load_graph(id).original_ids;
    auto text = dendrogram(id, hash).to_json(ids).dump() + "\n";
    write_file_atomic(path, text);
    return text;
  }

  fs::path pvw_file(const std::string& id, const std::string& hash, const std::string& ext) const {
    return fs::path(pvw_base(id, hash)).replace_extension(ext);
  }

  static bool valid_id(const std::string& id) {
    return id.size() == 16 && std::all_of(id.begin(), id.end(), [](char c) {
             return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
  }

 private:
  fs::path graph_dir(const std::string& id) const { return root_ / "graphs" / id; }
  fs::path pvw_base(const std::string& id, const std::string& hash) const { return graph_dir(id) / "pvw" / hash; }
  void require_graph(const std::string& id) const {
    if (!has_graph(id)) throw NotFoundError("unknown graph " + id);
  }

  fs::path root_;
  mutable std::mutex mu_;
};

// One background pvw job per graph at a time.
class JobBoard {
 public:
  struct Job {
    std::string id, graph, config_hash;
    std::string status = "queued";  // queued | running | done | failed
    std::string error;
    bool cached = false;
    nlohmann::json to_json() const {
      nlohmann::json j{{"id", id}, {"graph", graph}, {"config_hash", config_hash}, {"status", status},
                       {"cached", cached}};
      if (!error.empty()) j["error"] = error;
      return j;
    }
  };

  explicit JobBoard(Workspace& ws) : ws_(ws) {}
  ~JobBoard() { wait_all(); }

  // nullopt when a job for this graph is still running
  std::optional<Job> submit(const std::string& graph, const PvwConfig& c) {
    std::unique_lock lock(mu_);
    if (busy_.count(graph)) return std::nullopt;
    Job job;
    job.id = "job-" + std::to_string(++counter_);
    job.graph = graph;
    job.config_hash = c.hash(graph);
    if (ws_.has_pvw(graph, job.config_hash)) {
      lock.unlock();
      ws_.ensure_pvw(graph, c);  // cache hit: only marks it current
      lock.lock();
      job.status = "done";
      job.cached = true;
      jobs_[job.id] = job;
      return job;
    }
    job.status = "running";
    busy_.insert(graph);
    jobs_[job.id] = job;
    threads_.emplace_back([this, id = job.id, graph, c] {
      std::string err;
      try {
        ws_.ensure_pvw(graph, c);
      } catch (const std::exception& e) {
        err = e.what();
        if (err.empty()) err = "failed";
      }
      std::lock_guard g(mu_);
      auto& j = jobs_[id];
      j.status = err.empty() ? "done" : "failed";
      j.error = err;
      busy_.erase(graph);
      cv_.notify_all();
    });
    return job;
  }

  std::optional<Job> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  bool running(const std::string& graph) const {
    std::lock_guard lock(mu_);
    return busy_.count(graph) > 0;
  }

  void wait_all() {
    std::vector<std::thread> ts;
    {
      std::lock_guard lock(mu_);
      ts.swap(threads_);
    }
    for (auto& t : ts) t.join();
  }

 private:
  Workspace& ws_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::set<std::string> busy_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
};

// HTTP API over a workspace.
class Service {
 public:
  explicit Service(const fs::path& root) : ws_(root), jobs_(ws_) { routes(); }
  ~Service() { stop(); }

  Workspace& workspace() { return ws_; }
  JobBoard& jobs() { return jobs_; }
  httplib::Server& server() { return srv_; }

  // port 0 picks a free port; returns the bound port
  int bind(const std::string& host, int port) {
    int p = port == 0 ? srv_.bind_to_any_port(host) : (srv_.bind_to_port(host, port) ? port : -1);
    if (p < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return p;
  }
  void listen_after_bind() { srv_.listen_after_bind(); }
  void stop() {
    srv_.stop();
    jobs_.wait_all();
  }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump() + "\n", "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", msg}, {"status", status}});
  }

  static double query_double(const httplib::Request& req, const std::string& key, double def) {
    if (!req.has_param(key)) return def;
    auto s = req.get_param_value(key);
    try {
      std::size_t pos = 0;
      double x = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::logic_error&) {
      throw std::invalid_argument("query parameter '" + key + "' is not a number");
    }
  }

  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 422, e.what());
      } catch (const ParseError& e) {
        send_error(res, 400, e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const SizeGuardError& e) {
        send_error(res, 413, e.what());
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
      }
    };
  }

  std::string graph_id(const httplib::Request& req) const {
    auto id = req.matches[1].str();
    if (!ws_.has_graph(id)) throw NotFoundError("unknown graph " + id);
    return id;
  }

  void routes() {
    srv_.Get("/graphs", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& g : ws_.list_graphs()) arr.push_back(g.to_json());
      send_json(res, 200, {{"graphs", arr}});
    }));

    srv_.Post("/graphs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto name = req.has_param("name") ? req.get_param_value("name") : "";
      bool existed = false;
      try {
        existed = ws_.has_graph(content_hash(req.body));
      } catch (...) {
      }
      auto rec = ws_.add_graph(req.body, name);
      send_json(res, existed ? 200 : 201, rec.to_json());
    }));

    srv_.Get(R"(/graphs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = graph_id(req);
      auto j = ws_.graph_record(id).to_json();
      auto cur = ws_.current_pvw(id);
      j["pvw"] = cur ? nlohmann::json(*cur) : nlohmann::json(nullptr);
      send_json(res, 200, j);
    }));

    srv_.Post(R"(/graphs/([^/]+)/pvw)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = graph_id(req);
      nlohmann::json body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      PvwConfig c;
      try {
        c = PvwConfig::from_json(body);
      } catch (const Error& e) {
        throw std::invalid_argument(e.what());
      }
      auto job = jobs_.submit(id, c);
      if (!job) return send_error(res, 409, "a pvw job is already running for graph " + id);
      send_json(res, job->status == "done" ? 200 : 202, job->to_json());
    }));

    srv_.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto job = jobs_.get(req.matches[1].str());
      if (!job) throw NotFoundError("unknown job " + req.matches[1].str());
      send_json(res, 200, job->to_json());
    }));

    srv_.Get(R"(/graphs/([^/]+)/dendrogram)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = graph_id(req);
      auto hash = ws_.require_current(id);
      res.status = 200;
      res.set_content(ws_.dendrogram_json(id, hash), "application/json");
    }));

    srv_.Get(R"(/graphs/([^/]+)/matrix)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = graph_id(req);
      auto hash = ws_.require_current(id);
      auto order = req.has_param("order") ? req.get_param_value("order") : "dendrogram";
      auto pvw = ws_.load_pvw(id, hash);
      std::vector<NodeId> perm;
      if (order == "dendrogram") {
        perm = ws_.dendrogram(id, hash).leaf_order();
      } else if (order == "input") {
        perm.resize(pvw.node_count());
        std::iota(perm.begin(), perm.end(), NodeId{0});
      } else {
        throw std::invalid_argument("order must be 'dendrogram' or 'input'");
      }
      if (perm.size() > 4096) throw SizeGuardError("matrix image limited to n <= 4096");
      res.status = 200;
      res.set_content(render_matrix(pvw, perm), "image/x-portable-graymap");
    }));

    srv_.Get(R"(/graphs/([^/]+)/coarse)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = graph_id(req);
      auto hash = ws_.require_current(id);
      if (!req.has_param("merge") || !req.has_param("community"))
        throw std::invalid_argument("merge and community levels are required");
      double merge = query_double(req, "merge", 0), community = query_double(req, "community", 0);
      Thresholds th;
      th.blue = query_double(req, "blue", th.blue);
      th.red = query_double(req, "red", th.red);
      auto loaded = ws_.load_graph(id);
      auto pvw = ws_.load_pvw(id, hash);
      auto dg = ws_.dendrogram(id, hash);
      CoarseView cv;
      try {
        cv = coarse_grain(loaded.graph, pvw, dg, merge, community, th);
      } catch (const Error& e) {
        throw std::invalid_argument(e.what());
      }
      send_json(res, 200, cv.to_json(loaded.original_ids));
    }));
  }

  Workspace ws_;
  JobBoard jobs_;
  httplib::Server srv_;
};

}  // namespace comember
