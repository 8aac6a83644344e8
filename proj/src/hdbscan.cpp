#include "esfo/hdbscan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace esfo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Zero distances (duplicate points) would give infinite lambda.
constexpr double kMinDistance = 1e-12;

// Squared distance to the k-th nearest neighbour, the point itself counted
// as the first. Points are visited in order of their third coordinate so
// the scan can stop once the gap along that axis alone is too large.
std::vector<double> core_distances_sq(std::span<const Eigen::Vector3d> pts, int k) {
  const int n = static_cast<int>(pts.size());
  std::vector<double> core(n, 0.0);
  const int others = std::min(k - 1, n - 1);
  if (others <= 0) return core;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pts[a].z() < pts[b].z(); });

  std::priority_queue<double> heap;
  for (int s = 0; s < n; ++s) {
    const auto& p = pts[order[s]];
    heap = {};
    int lo = s - 1;
    int hi = s + 1;
    while (lo >= 0 || hi < n) {
      const double bound =
          static_cast<int>(heap.size()) == others ? heap.top() : kInf;
      const double dlo = lo >= 0 ? p.z() - pts[order[lo]].z() : kInf;
      const double dhi = hi < n ? pts[order[hi]].z() - p.z() : kInf;
      const bool take_lo = dlo <= dhi;
      const double gap = take_lo ? dlo : dhi;
      if (gap * gap >= bound) break;
      const int j = take_lo ? order[lo--] : order[hi++];
      const double d2 = (pts[j] - p).squaredNorm();
      if (static_cast<int>(heap.size()) < others) {
        heap.push(d2);
      } else if (d2 < heap.top()) {
        heap.pop();
        heap.push(d2);
      }
    }
    core[order[s]] = heap.top();
  }
  return core;
}

struct Edge {
  int a;
  int b;
  double weight;  // mutual reachability distance
};

// Prim's algorithm on the dense mutual-reachability graph.
std::vector<Edge> mutual_reachability_mst(std::span<const Eigen::Vector3d> pts,
                                          const std::vector<double>& core_sq) {
  const int n = static_cast<int>(pts.size());
  std::vector<Edge> edges;
  edges.reserve(n > 0 ? n - 1 : 0);
  std::vector<char> in_tree(n, 0);
  std::vector<double> best(n, kInf);
  std::vector<int> from(n, -1);

  int current = 0;
  for (int step = 0; step + 1 < n; ++step) {
    in_tree[current] = 1;
    const auto& p = pts[current];
    const double core_cur = core_sq[current];
    int next = -1;
    double next_w = kInf;
    for (int j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double w = std::max({(pts[j] - p).squaredNorm(), core_cur, core_sq[j]});
      if (w < best[j]) {
        best[j] = w;
        from[j] = current;
      }
      if (best[j] < next_w) {
        next_w = best[j];
        next = j;
      }
    }
    edges.push_back({from[next], next, std::sqrt(next_w)});
    current = next;
  }
  return edges;
}

struct Merge {
  int left;
  int right;
  double distance;
  int size;
};

// Single-linkage dendrogram; node ids >= n refer to merges[id - n].
std::vector<Merge> single_linkage(int n, std::vector<Edge> edges) {
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& x, const Edge& y) { return x.weight < y.weight; });
  std::vector<int> parent(n), node(n), size(n, 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::iota(node.begin(), node.end(), 0);
  const auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  std::vector<Merge> merges;
  merges.reserve(edges.size());
  for (const auto& e : edges) {
    const int ra = find(e.a);
    const int rb = find(e.b);
    merges.push_back({node[ra], node[rb], e.weight, size[ra] + size[rb]});
    parent[rb] = ra;
    size[ra] += size[rb];
    node[ra] = n + static_cast<int>(merges.size()) - 1;
  }
  return merges;
}

struct CondensedRow {
  int parent;  // cluster id (>= n)
  int child;   // point id (< n) or cluster id
  double lambda;
  int child_size;
};

std::vector<CondensedRow> condense(int n, const std::vector<Merge>& merges,
                                   int min_cluster_size) {
  const int root = 2 * n - 2;
  const auto count = [&](int node) { return node < n ? 1 : merges[node - n].size; };

  std::vector<int> relabel(root + 1, -1);
  relabel[root] = n;
  int next_label = n + 1;
  std::vector<CondensedRow> rows;

  const auto drop_points = [&](int sub_root, int parent_label, double lambda) {
    std::vector<int> stack{sub_root};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (v < n) {
        rows.push_back({parent_label, v, lambda, 1});
      } else {
        stack.push_back(merges[v - n].left);
        stack.push_back(merges[v - n].right);
      }
    }
  };

  // Top-down traversal; subtrees that fall out are never pushed.
  std::vector<int> queue{root};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const int v = queue[qi];
    if (v < n) continue;
    const auto& m = merges[v - n];
    const double lambda = 1.0 / std::max(m.distance, kMinDistance);
    const int lc = count(m.left);
    const int rc = count(m.right);
    const int label = relabel[v];
    if (lc >= min_cluster_size && rc >= min_cluster_size) {
      relabel[m.left] = next_label++;
      rows.push_back({label, relabel[m.left], lambda, lc});
      relabel[m.right] = next_label++;
      rows.push_back({label, relabel[m.right], lambda, rc});
      queue.push_back(m.left);
      queue.push_back(m.right);
    } else if (lc < min_cluster_size && rc < min_cluster_size) {
      drop_points(m.left, label, lambda);
      drop_points(m.right, label, lambda);
    } else if (lc < min_cluster_size) {
      relabel[m.right] = label;
      drop_points(m.left, label, lambda);
      queue.push_back(m.right);
    } else {
      relabel[m.left] = label;
      drop_points(m.right, label, lambda);
      queue.push_back(m.left);
    }
  }
  return rows;
}

}  // namespace

std::vector<int> hdbscan(std::span<const Eigen::Vector3d> points,
                         const HdbscanParams& params) {
  const int n = static_cast<int>(points.size());
  const int mcs = std::max(2, params.min_cluster_size);
  std::vector<int> labels(n, -1);
  if (n < mcs || n < 2) return labels;

  const int min_samples = params.min_samples > 0 ? params.min_samples : mcs;
  const auto core = core_distances_sq(points, min_samples);
  const auto merges = single_linkage(n, mutual_reachability_mst(points, core));
  const auto rows = condense(n, merges, mcs);

  int max_cluster = n;
  for (const auto& r : rows) max_cluster = std::max({max_cluster, r.parent, r.child});
  const int num_clusters = max_cluster - n + 1;
  const auto idx = [n](int cluster) { return cluster - n; };

  // Stability of each condensed cluster.
  std::vector<double> birth(num_clusters, 0.0);
  std::vector<int> cluster_parent(num_clusters, -1);
  std::vector<std::vector<int>> cluster_children(num_clusters);
  for (const auto& r : rows) {
    if (r.child_size > 1) {
      birth[idx(r.child)] = r.lambda;
      cluster_parent[idx(r.child)] = r.parent;
      cluster_children[idx(r.parent)].push_back(r.child);
    }
  }
  std::vector<double> stability(num_clusters, 0.0);
  for (const auto& r : rows) {
    stability[idx(r.parent)] += (r.lambda - birth[idx(r.parent)]) * r.child_size;
  }

  // Excess of mass, leaves upward (children always have larger ids).
  std::vector<char> selected(num_clusters, 0);
  const int lowest = params.allow_single_cluster ? 0 : 1;
  for (int c = num_clusters - 1; c >= lowest; --c) {
    double subtree = 0.0;
    for (int child : cluster_children[c]) subtree += stability[idx(child)];
    if (!cluster_children[c].empty() && subtree > stability[c]) {
      stability[c] = subtree;
    } else {
      selected[c] = 1;
      std::vector<int> stack(cluster_children[c].begin(), cluster_children[c].end());
      while (!stack.empty()) {
        const int d = idx(stack.back());
        stack.pop_back();
        selected[d] = 0;
        stack.insert(stack.end(), cluster_children[d].begin(), cluster_children[d].end());
      }
    }
  }

  const double eps = params.cluster_selection_epsilon;
  const bool has_splits = num_clusters > 1;
  if (eps > 0.0 && has_splits) {
    const bool only_root = selected[0] && std::count(selected.begin(), selected.end(), 1) == 1;
    if (!only_root) {
      std::vector<char> chosen(num_clusters, 0);
      std::vector<char> processed(num_clusters, 0);
      for (int c = 0; c < num_clusters; ++c) {
        if (!selected[c]) continue;
        if (1.0 / birth[c] >= eps) {
          chosen[c] = 1;
          continue;
        }
        if (processed[c]) continue;
        // Walk up to the first ancestor born at a distance above epsilon.
        int node = c + n;
        while (true) {
          const int parent = cluster_parent[idx(node)];
          if (parent == n) {
            if (params.allow_single_cluster) node = parent;
            break;
          }
          if (1.0 / birth[idx(parent)] > eps) {
            node = parent;
            break;
          }
          node = parent;
        }
        chosen[idx(node)] = 1;
        std::vector<int> stack(cluster_children[idx(node)].begin(),
                               cluster_children[idx(node)].end());
        while (!stack.empty()) {
          const int d = idx(stack.back());
          stack.pop_back();
          processed[d] = 1;
          stack.insert(stack.end(), cluster_children[d].begin(), cluster_children[d].end());
        }
      }
      selected = chosen;
    }
  }

  // Nearest selected ancestor (or self) of every condensed cluster.
  std::vector<int> owner(num_clusters, -1);
  for (int c = 0; c < num_clusters; ++c) {
    if (selected[c]) {
      owner[c] = c;
    } else if (c > 0 && cluster_parent[c] >= n) {
      owner[c] = owner[idx(cluster_parent[c])];
    }
  }

  const int selected_count = static_cast<int>(std::count(selected.begin(), selected.end(), 1));
  double root_min_lambda = 0.0;
  if (selected[0]) {
    // Root kept as the only cluster: only points that stay until the
    // epsilon scale (or the deepest split) are members.
    if (eps > 0.0) {
      root_min_lambda = 1.0 / eps;
    } else {
      for (const auto& r : rows) {
        if (r.parent == n) root_min_lambda = std::max(root_min_lambda, r.lambda);
      }
    }
  }

  std::vector<int> raw(n, -1);
  for (const auto& r : rows) {
    if (r.child_size != 1 || r.child >= n) continue;
    const int o = owner[idx(r.parent)];
    if (o < 0) continue;
    if (o == 0) {
      if (selected_count == 1 && params.allow_single_cluster && r.lambda >= root_min_lambda) {
        raw[r.child] = 0;
      }
      continue;
    }
    raw[r.child] = o;
  }

  // Relabel densely in order of first appearance.
  std::vector<int> dense(num_clusters, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (raw[i] < 0) continue;
    if (dense[raw[i]] < 0) dense[raw[i]] = next++;
    labels[i] = dense[raw[i]];
  }
  return labels;
}

}  // namespace esfo
