#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "plate_support/errors.hpp"
#include "plate_support/grid.hpp"

namespace plate_support {

/// Unordered pair of 4-adjacent nodes, stored with a < b.
struct Edge {
  int a = 0;
  int b = 0;
  Edge() = default;
  Edge(int u, int v) : a(std::min(u, v)), b(std::max(u, v)) {}
  friend bool operator==(const Edge&, const Edge&) = default;
  friend bool operator<(const Edge& l, const Edge& r) { return l.a != r.a ? l.a < r.a : l.b < r.b; }
};

namespace detail {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

inline double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

}  // namespace detail

/// Connected 1D support set: a subgraph of the 4-connected lattice.
///
/// Nodes and edges are kept sorted and unique. Construction validates the
/// lattice structure (adjacency, endpoint membership, boundary containment
/// when requested) but not connectivity, which is_connected() reports.
class SupportGraph {
 public:
  SupportGraph(Grid2D grid, std::vector<int> nodes, std::vector<Edge> edges, bool include_boundary = false)
      : grid_(std::move(grid)), nodes_(std::move(nodes)), edges_(std::move(edges)), include_boundary_(include_boundary) {
    for (const auto& e : edges_) {
      nodes_.push_back(e.a);
      nodes_.push_back(e.b);
    }
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    for (int n : nodes_)
      if (n < 0 || n >= grid_.size()) throw ConfigError("support node outside the grid");
    for (const auto& e : edges_)
      if (!adjacent(e.a, e.b)) throw ConfigError("support edge joins non-adjacent nodes");
    if (include_boundary_) {
      for (const auto& e : perimeter_edges(grid_))
        if (!std::binary_search(edges_.begin(), edges_.end(), e))
          throw ConfigError("include_boundary set but a perimeter edge is missing");
    }
  }

  /// All perimeter edges of the grid rectangle.
  static std::vector<Edge> perimeter_edges(const Grid2D& g) {
    std::vector<Edge> out;
    for (int i = 0; i + 1 < g.nx(); ++i) {
      out.emplace_back(g.index(i, 0), g.index(i + 1, 0));
      out.emplace_back(g.index(i, g.ny() - 1), g.index(i + 1, g.ny() - 1));
    }
    for (int j = 0; j + 1 < g.ny(); ++j) {
      out.emplace_back(g.index(0, j), g.index(0, j + 1));
      out.emplace_back(g.index(g.nx() - 1, j), g.index(g.nx() - 1, j + 1));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// K = boundary of the rectangle.
  static SupportGraph boundary(const Grid2D& g) { return SupportGraph(g, {}, perimeter_edges(g), true); }

  /// Axis-aligned lattice segment from (i0, j0) to (i1, j1).
  static SupportGraph segment(const Grid2D& g, int i0, int j0, int i1, int j1) {
    return SupportGraph(g, {g.index(i0, j0)}, segment_edges(g, i0, j0, i1, j1));
  }

  static std::vector<Edge> segment_edges(const Grid2D& g, int i0, int j0, int i1, int j1) {
    if (i0 != i1 && j0 != j1) throw ConfigError("segment must be axis aligned");
    if (!g.contains(i0, j0) || !g.contains(i1, j1)) throw ConfigError("segment leaves the grid");
    std::vector<Edge> out;
    const int di = (i1 > i0) - (i1 < i0), dj = (j1 > j0) - (j1 < j0);
    for (int i = i0, j = j0; i != i1 || j != j1; i += di, j += dj) out.emplace_back(g.index(i, j), g.index(i + di, j + dj));
    return out;
  }

  const Grid2D& grid() const { return grid_; }
  const std::vector<int>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool include_boundary() const { return include_boundary_; }
  bool empty() const { return nodes_.empty(); }

  bool has_node(int n) const { return std::binary_search(nodes_.begin(), nodes_.end(), n); }
  bool has_edge(const Edge& e) const { return std::binary_search(edges_.begin(), edges_.end(), e); }
  bool adjacent(int a, int b) const {
    if (a > b) std::swap(a, b);
    if (b - a == grid_.nx()) return true;
    return b - a == 1 && (a % grid_.nx()) != grid_.nx() - 1;
  }
  bool is_perimeter_edge(const Edge& e) const {
    return grid_.on_boundary(e.a) && grid_.on_boundary(e.b) &&
           (grid_.ij(e.a).i == grid_.ij(e.b).i ? (grid_.ij(e.a).i == 0 || grid_.ij(e.a).i == grid_.nx() - 1)
                                                 : (grid_.ij(e.a).j == 0 || grid_.ij(e.a).j == grid_.ny() - 1));
  }

  /// Degree of a node inside K.
  int degree(int n) const {
    int d = 0;
    grid_.for_each_neighbor(n, [&](int m) { d += has_edge(Edge(n, m)); });
    return d;
  }

  SupportGraph with_edge(const Edge& e) const {
    auto edges = edges_;
    edges.push_back(e);
    return SupportGraph(grid_, nodes_, std::move(edges), include_boundary_);
  }

  /// Removes an edge; endpoints left without edges are dropped unless K would become empty.
  SupportGraph without_edge(const Edge& e) const {
    std::vector<Edge> edges;
    edges.reserve(edges_.size());
    for (const auto& x : edges_)
      if (!(x == e)) edges.push_back(x);
    std::vector<int> keep;
    if (edges.empty()) keep.push_back(e.a);
    for (int n : nodes_) {
      if (n == e.a || n == e.b) continue;
      bool touched = false;
      for (const auto& x : edges_)
        if (x.a == n || x.b == n) touched = true;
      if (!touched) keep.push_back(n);
    }
    return SupportGraph(grid_, std::move(keep), std::move(edges), include_boundary_);
  }

  friend bool operator==(const SupportGraph& l, const SupportGraph& r) {
    return l.grid_.same_shape(r.grid_) && l.nodes_ == r.nodes_ && l.edges_ == r.edges_;
  }

 private:
  Grid2D grid_;
  std::vector<int> nodes_;
  std::vector<Edge> edges_;
  bool include_boundary_;
};

/// H^1(K) for a lattice set: edge count times spacing.
inline double length(const SupportGraph& K) { return static_cast<double>(K.edges().size()) * K.grid().delta(); }

inline bool is_connected(const SupportGraph& K) {
  const auto& nodes = K.nodes();
  if (nodes.empty()) return false;
  if (nodes.size() == 1) return true;
  detail::DisjointSets ds(K.grid().size());
  int components = static_cast<int>(nodes.size());
  for (const auto& e : K.edges()) components -= ds.unite(e.a, e.b);
  return components == 1;
}

/// Symmetric Hausdorff distance between the node sets of K1 and K2.
inline double hausdorff_distance(const SupportGraph& K1, const SupportGraph& K2) {
  if (K1.empty() || K2.empty()) throw ConfigError("hausdorff_distance of an empty set");
  auto directed = [](const SupportGraph& A, const SupportGraph& B) {
    double worst = 0.0;
    for (int a : A.nodes()) {
      const auto pa = A.grid().position(a);
      double best = std::numeric_limits<double>::infinity();
      for (int b : B.nodes()) {
        const auto pb = B.grid().position(b);
        best = std::min(best, std::hypot(pa[0] - pb[0], pa[1] - pb[1]));
        if (best == 0.0) break;
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(K1, K2), directed(K2, K1));
}

/// Distance from every grid node to K (nodes and edges as segments).
inline std::vector<double> distance_to(const SupportGraph& K) {
  const auto& g = K.grid();
  std::vector<double> d(g.size(), std::numeric_limits<double>::infinity());
  for (int n = 0; n < g.size(); ++n) {
    const auto p = g.position(n);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : K.edges()) {
      const auto a = g.position(e.a), b = g.position(e.b);
      best = std::min(best, detail::point_segment_distance(p[0], p[1], a[0], a[1], b[0], b[1]));
    }
    for (int m : K.nodes()) {
      const auto q = g.position(m);
      best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1]));
    }
    d[n] = best;
  }
  return d;
}

/// Footprint of the glue region: nodes x' with dist(x', K) < h.
inline std::vector<int> dilate(const SupportGraph& K, double h) {
  if (!(h > 0.0)) throw ConfigError("dilation radius must be positive");
  const auto d = distance_to(K);
  std::vector<int> out;
  for (int n = 0; n < static_cast<int>(d.size()); ++n)
    if (d[n] < h) out.push_back(n);
  return out;
}

/// K's nodes plus their 4-neighbours (one-ring), sorted.
inline std::vector<int> clamp_set(const SupportGraph& K) {
  std::vector<int> out(K.nodes());
  for (int n : K.nodes()) K.grid().for_each_neighbor(n, [&](int m) { out.push_back(m); });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Lattice structure of a node set S: every edge joining two nodes of S.
inline SupportGraph induced_support(const Grid2D& g, std::vector<int> nodes) {
  std::sort(nodes.begin(), nodes.end());
  std::vector<Edge> edges;
  for (int n : nodes) {
    const auto p = g.ij(n);
    if (p.i + 1 < g.nx() && std::binary_search(nodes.begin(), nodes.end(), n + 1)) edges.emplace_back(n, n + 1);
    if (p.j + 1 < g.ny() && std::binary_search(nodes.begin(), nodes.end(), n + g.nx())) edges.emplace_back(n, n + g.nx());
  }
  return SupportGraph(g, std::move(nodes), std::move(edges));
}

/// Union of two support sets on the same grid.
inline SupportGraph unite(const SupportGraph& A, const SupportGraph& B) {
  auto nodes = A.nodes();
  nodes.insert(nodes.end(), B.nodes().begin(), B.nodes().end());
  auto edges = A.edges();
  edges.insert(edges.end(), B.edges().begin(), B.edges().end());
  return SupportGraph(A.grid(), std::move(nodes), std::move(edges), A.include_boundary() || B.include_boundary());
}

/// Groups of grid cells around a node that are not separated by K edges.
///
/// Quadrants are numbered counter-clockwise: 0 = (+x,+y), 1 = (-x,+y),
/// 2 = (-x,-y), 3 = (+x,-y). Ray r lies between quadrant r-1 and r with
/// rays 0 = +x, 1 = +y, 2 = -x, 3 = -y.
struct NodeSector {
  std::vector<int> quadrants;
  std::array<bool, 4> rays{};  // rays bounding or inside the sector
};

inline std::vector<NodeSector> node_sectors(const SupportGraph& K, int node) {
  const auto& g = K.grid();
  const auto p = g.ij(node);
  static constexpr int qi[4] = {0, -1, -1, 0};  // lower-left corner offsets of quadrant cells
  static constexpr int qj[4] = {0, 0, -1, -1};
  static constexpr int ri[4] = {1, 0, -1, 0};
  static constexpr int rj[4] = {0, 1, 0, -1};
  std::array<bool, 4> exists{};
  for (int q = 0; q < 4; ++q) {
    const int ci = p.i + qi[q], cj = p.j + qj[q];
    exists[q] = ci >= 0 && cj >= 0 && ci < g.nx() - 1 && cj < g.ny() - 1;
  }
  auto ray_cut = [&](int r) {
    const int i = p.i + ri[r], j = p.j + rj[r];
    return g.contains(i, j) && K.has_edge(Edge(node, g.index(i, j)));
  };
  // quadrant q and q+1 share ray q+1
  detail::DisjointSets ds(4);
  for (int q = 0; q < 4; ++q) {
    const int nq = (q + 1) % 4;
    if (exists[q] && exists[nq] && !ray_cut(nq)) ds.unite(q, nq);
  }
  std::vector<NodeSector> out;
  std::array<int, 4> slot{-1, -1, -1, -1};
  for (int q = 0; q < 4; ++q) {
    if (!exists[q]) continue;
    const int root = ds.find(q);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(out.size());
      out.emplace_back();
    }
    auto& s = out[slot[root]];
    s.quadrants.push_back(q);
    s.rays[q] = true;            // ray q is the clockwise side of quadrant q
    s.rays[(q + 1) % 4] = true;  // ray q+1 is its counter-clockwise side
  }
  return out;
}

/// Writes the text format: "grid nx ny delta" then one "edge i1 j1 i2 j2" per edge.
/// Nodes without edges are written as "node i j" lines.
inline void write_support(std::ostream& os, const SupportGraph& K) {
  const auto& g = K.grid();
  os << "grid " << g.nx() << ' ' << g.ny() << ' ' << std::setprecision(17) << g.delta() << '\n';
  std::vector<char> touched(g.size(), 0);
  for (const auto& e : K.edges()) {
    const auto a = g.ij(e.a), b = g.ij(e.b);
    os << "edge " << a.i << ' ' << a.j << ' ' << b.i << ' ' << b.j << '\n';
    touched[e.a] = touched[e.b] = 1;
  }
  for (int n : K.nodes())
    if (!touched[n]) os << "node " << g.ij(n).i << ' ' << g.ij(n).j << '\n';
}

inline SupportGraph read_support(std::istream& is) {
  std::string line, tag;
  int nx = 0, ny = 0;
  double delta = 0;
  if (!std::getline(is, line)) throw ConfigError("support file is empty");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> nx >> ny >> delta) || tag != "grid") throw ConfigError("support file must start with 'grid nx ny delta'");
  }
  Grid2D g(nx, ny, delta);
  std::vector<Edge> edges;
  std::vector<int> nodes;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    if (!(ls >> tag)) continue;
    int i1, j1, i2, j2;
    if (tag == "edge" && (ls >> i1 >> j1 >> i2 >> j2)) {
      if (!g.contains(i1, j1) || !g.contains(i2, j2)) throw ConfigError("edge outside grid on line " + std::to_string(lineno));
      edges.emplace_back(g.index(i1, j1), g.index(i2, j2));
    } else if (tag == "node" && (ls >> i1 >> j1)) {
      if (!g.contains(i1, j1)) throw ConfigError("node outside grid on line " + std::to_string(lineno));
      nodes.push_back(g.index(i1, j1));
    } else {
      throw ConfigError("malformed support line " + std::to_string(lineno));
    }
  }
  const auto perimeter = SupportGraph::perimeter_edges(g);
  std::sort(edges.begin(), edges.end());
  const bool has_boundary = std::includes(edges.begin(), edges.end(), perimeter.begin(), perimeter.end());
  return SupportGraph(g, std::move(nodes), std::move(edges), has_boundary);
}

inline void save_support(const std::string& path, const SupportGraph& K) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  write_support(os, K);
}

inline SupportGraph load_support(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return read_support(is);
}

}  // namespace plate_support
