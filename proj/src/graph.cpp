#include "rabot/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "rabot/rng.hpp"

namespace rabot::graph {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

long Graph::edge_count() const {
  long c = 0;
  for (const auto& rel : relations) c += static_cast<long>(rel.size());
  return c;
}

bool Graph::fully_labeled() const {
  return std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
}

std::vector<int> Graph::nodes_in_split(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

bool operator==(const Graph& a, const Graph& b) {
  auto teq = [](const num::Tensor& x, const num::Tensor& y) {
    return x.same_shape(y) && x.val() == y.val();
  };
  return a.n == b.n && a.relation_names == b.relation_names &&
         a.relations == b.relations && a.labels == b.labels && a.split == b.split &&
         teq(a.features.numerical, b.features.numerical) &&
         teq(a.features.boolean_mat, b.features.boolean_mat) &&
         teq(a.features.description, b.features.description) &&
         teq(a.features.tweet_mean, b.features.tweet_mean) &&
         a.features.tweets == b.features.tweets;
}

namespace {

[[noreturn]] void fail(const std::string& file, int line, const std::string& msg) {
  throw DataError(file + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(std::string_view tok, const std::string& file, int line) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(file, line, "bad float '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) fail(file, line, "non-finite value");
  return v;
}

long parse_int(std::string_view tok, const std::string& file, int line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(file, line, "bad integer '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    const size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

std::ifstream open_or_fail(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("missing file: " + p.string());
  return in;
}

num::Tensor load_feature_tsv(const fs::path& p, int n, int dim, bool boolean) {
  auto in = open_or_fail(p);
  const std::string fname = p.string();
  std::vector<double> values;
  values.reserve(static_cast<size_t>(n) * dim);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno > n) fail(fname, lineno, "more lines than meta n=" + std::to_string(n));
    const auto toks = (dim == 0 && line.empty()) ? std::vector<std::string_view>{}
                                                 : split_tabs(line);
    if (static_cast<int>(toks.size()) != dim) {
      fail(fname, lineno, "expected " + std::to_string(dim) + " columns, got " +
                              std::to_string(toks.size()));
    }
    for (const auto& tok : toks) {
      const double v = parse_double(tok, fname, lineno);
      if (boolean && v != 0.0 && v != 1.0) {
        fail(fname, lineno, "boolean feature must be 0 or 1, got '" + std::string(tok) + "'");
      }
      values.push_back(v);
    }
  }
  if (lineno != n) {
    throw DataError(fname + ": expected " + std::to_string(n) + " lines, got " +
                    std::to_string(lineno));
  }
  return num::Tensor::from(n, dim, std::move(values));
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

Graph load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path meta_path = root / "meta.json";
  auto meta_in = open_or_fail(meta_path);
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  Graph g;
  try {
    g.n = meta.at("n").get<int>();
    g.relation_names = meta.at("relations").get<std::vector<std::string>>();
    const auto& dims = meta.at("dims");
    g.features.numerical = load_feature_tsv(root / "features_numerical.tsv", g.n,
                                            dims.at("numerical").get<int>(), false);
    g.features.boolean_mat = load_feature_tsv(root / "features_boolean.tsv", g.n,
                                              dims.at("boolean").get<int>(), true);
    g.features.description = load_feature_tsv(root / "features_description.tsv", g.n,
                                              dims.at("description").get<int>(), false);
    g.features.tweet_dim = dims.at("tweet").get<int>();
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (g.n < 1) throw DataError(meta_path.string() + ": n must be >= 1");
  if (g.relation_names.empty()) {
    throw DataError(meta_path.string() + ": at least one relation required");
  }

  // Tweets: zero or more embedding lines per node, mean-pooled afterwards.
  g.features.tweets.assign(g.n, {});
  {
    const fs::path p = root / "tweets.jsonl";
    auto in = open_or_fail(p);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
        const int node = rec.at("node").get<int>();
        if (node < 0 || node >= g.n) {
          fail(p.string(), lineno, "node id " + std::to_string(node) + " out of range");
        }
        auto emb = rec.at("embedding").get<std::vector<double>>();
        if (static_cast<int>(emb.size()) != g.features.tweet_dim) {
          fail(p.string(), lineno, "embedding dim " + std::to_string(emb.size()) +
                                       " != meta tweet dim " +
                                       std::to_string(g.features.tweet_dim));
        }
        for (double v : emb) {
          if (!std::isfinite(v)) fail(p.string(), lineno, "non-finite value");
        }
        g.features.tweets[node].push_back(std::move(emb));
      } catch (const json::exception& e) {
        fail(p.string(), lineno, e.what());
      }
    }
    std::vector<double> pooled(static_cast<size_t>(g.n) * g.features.tweet_dim, 0.0);
    for (int i = 0; i < g.n; ++i) {
      const auto& list = g.features.tweets[i];
      if (list.empty()) continue;
      double* row = pooled.data() + static_cast<size_t>(i) * g.features.tweet_dim;
      for (const auto& emb : list) {
        for (int j = 0; j < g.features.tweet_dim; ++j) row[j] += emb[j];
      }
      for (int j = 0; j < g.features.tweet_dim; ++j) row[j] /= static_cast<double>(list.size());
    }
    g.features.tweet_mean = num::Tensor::from(g.n, g.features.tweet_dim, std::move(pooled));
  }

  for (const auto& rel : g.relation_names) {
    const fs::path p = root / ("edges_" + rel + ".tsv");
    auto in = open_or_fail(p);
    std::set<Edge> edges;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = split_tabs(line);
      if (toks.size() != 2) fail(p.string(), lineno, "expected two columns");
      const long u = parse_int(toks[0], p.string(), lineno);
      const long v = parse_int(toks[1], p.string(), lineno);
      if (u < 0 || u >= g.n || v < 0 || v >= g.n) {
        fail(p.string(), lineno, "edge endpoint (" + std::to_string(u) + "," +
                                     std::to_string(v) + ") out of range for n=" +
                                     std::to_string(g.n));
      }
      if (u == v) fail(p.string(), lineno, "self-loop on node " + std::to_string(u));
      edges.insert({static_cast<int>(std::min(u, v)), static_cast<int>(std::max(u, v))});
    }
    g.relations.emplace_back(edges.begin(), edges.end());
  }

  g.labels.assign(g.n, -1);
  {
    const fs::path p = root / "labels.tsv";
    auto in = open_or_fail(p);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = split_tabs(line);
      if (toks.size() != 2) fail(p.string(), lineno, "expected two columns");
      const long node = parse_int(toks[0], p.string(), lineno);
      const long label = parse_int(toks[1], p.string(), lineno);
      if (node < 0 || node >= g.n) {
        fail(p.string(), lineno, "node id " + std::to_string(node) + " out of range");
      }
      if (label != 0 && label != 1) {
        fail(p.string(), lineno, "unknown label value " + std::to_string(label) +
                                     " (expected 0=human or 1=bot)");
      }
      if (g.labels[node] != -1) {
        fail(p.string(), lineno, "duplicate label for node " + std::to_string(node));
      }
      g.labels[node] = static_cast<int>(label);
    }
  }

  g.split.assign(g.n, Split::Train);
  {
    const fs::path p = root / "splits.tsv";
    if (fs::exists(p)) {
      auto in = open_or_fail(p);
      std::vector<bool> seen(g.n, false);
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto toks = split_tabs(line);
        if (toks.size() != 2) fail(p.string(), lineno, "expected two columns");
        const long node = parse_int(toks[0], p.string(), lineno);
        if (node < 0 || node >= g.n) {
          fail(p.string(), lineno, "node id " + std::to_string(node) + " out of range");
        }
        if (seen[node]) fail(p.string(), lineno, "duplicate split for node " + std::to_string(node));
        seen[node] = true;
        if (toks[1] == "train") {
          g.split[node] = Split::Train;
        } else if (toks[1] == "val") {
          g.split[node] = Split::Val;
        } else if (toks[1] == "test") {
          g.split[node] = Split::Test;
        } else {
          fail(p.string(), lineno, "unknown split tag '" + std::string(toks[1]) + "'");
        }
      }
      for (int i = 0; i < g.n; ++i) {
        if (!seen[i]) {
          throw DataError(p.string() + ": node " + std::to_string(i) + " has no split tag");
        }
      }
    }
  }
  return g;
}

void save_dataset(const Graph& g, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);

  json meta;
  meta["n"] = g.n;
  meta["relations"] = g.relation_names;
  meta["dims"] = {{"numerical", g.features.numerical.cols()},
                  {"boolean", g.features.boolean_mat.cols()},
                  {"description", g.features.description.cols()},
                  {"tweet", g.features.tweet_dim}};
  std::ofstream(root / "meta.json") << meta.dump(2) << "\n";

  auto write_tsv = [&](const fs::path& p, const num::Tensor& m) {
    std::ofstream out(p);
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) {
        if (j) out << '\t';
        out << format_double(m.at(i, j));
      }
      out << '\n';
    }
  };
  write_tsv(root / "features_numerical.tsv", g.features.numerical);
  write_tsv(root / "features_boolean.tsv", g.features.boolean_mat);
  write_tsv(root / "features_description.tsv", g.features.description);

  {
    std::ofstream out(root / "tweets.jsonl");
    for (int i = 0; i < g.n; ++i) {
      for (const auto& emb : g.features.tweets[i]) {
        out << "{\"node\": " << i << ", \"embedding\": [";
        for (size_t j = 0; j < emb.size(); ++j) {
          if (j) out << ", ";
          out << format_double(emb[j]);
        }
        out << "]}\n";
      }
    }
  }

  for (int r = 0; r < g.relation_count(); ++r) {
    std::ofstream out(root / ("edges_" + g.relation_names[r] + ".tsv"));
    for (const auto& e : g.relations[r]) out << e.u << '\t' << e.v << '\n';
  }

  {
    std::ofstream out(root / "labels.tsv");
    for (int i = 0; i < g.n; ++i) {
      if (g.labels[i] >= 0) out << i << '\t' << g.labels[i] << '\n';
    }
  }
  {
    std::ofstream out(root / "splits.tsv");
    for (int i = 0; i < g.n; ++i) out << i << '\t' << split_name(g.split[i]) << '\n';
  }
}

Graph assign_splits(const Graph& g, const SplitSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 ||
      std::fabs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw ContractError("split fractions must be nonnegative and sum to 1");
  }
  for (int i = 0; i < g.n; ++i) {
    if (g.labels[i] < 0) {
      throw ContractError("assign_splits requires labels; node " + std::to_string(i) +
                          " is unlabeled");
    }
  }
  const double fracs[3] = {spec.train, spec.val, spec.test};
  int positive_splits = 0;
  for (double f : fracs) positive_splits += f > 0 ? 1 : 0;

  Graph out = g;
  Rng rng(spec.seed);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> members;
    for (int i = 0; i < g.n; ++i) {
      if (g.labels[i] == cls) members.push_back(i);
    }
    if (members.empty()) continue;
    if (static_cast<int>(members.size()) < positive_splits) {
      throw ContractError("class " + std::to_string(cls) + " has " +
                          std::to_string(members.size()) + " nodes, fewer than the " +
                          std::to_string(positive_splits) + " requested splits");
    }
    rng.shuffle(members);
    // Largest-remainder allocation keeps per-split class counts within one
    // node of the exact proportions.
    const int c = static_cast<int>(members.size());
    int counts[3];
    double rema[3];
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fracs[s] * c;
      counts[s] = static_cast<int>(std::floor(exact));
      rema[s] = exact - counts[s];
      assigned += counts[s];
    }
    while (assigned < c) {
      int best = 0;
      for (int s = 1; s < 3; ++s) {
        if (rema[s] > rema[best]) best = s;
      }
      ++counts[best];
      rema[best] = -1.0;
      ++assigned;
    }
    int idx = 0;
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < counts[s]; ++k) out.split[members[idx++]] = static_cast<Split>(s);
    }
  }
  return out;
}

Graph remove_cross_class_edges(const Graph& g) {
  for (int i = 0; i < g.n; ++i) {
    if (g.labels[i] < 0) {
      throw ContractError("remove_cross_class_edges requires a fully labeled graph; node " +
                          std::to_string(i) + " is unlabeled");
    }
  }
  Graph out = g;
  for (auto& rel : out.relations) {
    std::erase_if(rel, [&](const Edge& e) { return g.labels[e.u] != g.labels[e.v]; });
  }
  return out;
}

}  // namespace rabot::graph
