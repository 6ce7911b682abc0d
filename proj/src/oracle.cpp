#include "gymgrid/oracle.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>

#include "gymgrid/grid_engine.hpp"

namespace gymgrid {

namespace {

// Neighbour offsets in row-major order: up, left, right, down.
constexpr int kDx[4] = {0, -1, 1, 0};
constexpr int kDy[4] = {-1, 0, 0, 1};

// Candidate routes weighed by the nearest-first lookahead.
constexpr std::size_t kLookaheadPaths = 256;

std::vector<Coord> zones_of(const TileGrid& tiles) {
  std::vector<Coord> zones;
  for (std::size_t i = 0; i < tiles.size(); ++i)
    if (tiles.cells()[i] == Tile::Residential) zones.push_back(tiles.coord(i));
  return zones;
}

std::vector<Coord> unpowered_zones(const PuzzleBoard& board) {
  std::vector<Coord> out;
  for (const Coord z : zones_of(board.tiles))
    if (!board.powered[z]) out.push_back(z);
  return out;
}

void apply_wires(PuzzleBoard& board, const std::vector<Coord>& path) {
  for (const Coord c : path) board.tiles[c] = Tile::Wire;
  refresh_power(board);
}

using Key = std::pair<int, int>;
constexpr int kInf = std::numeric_limits<int>::max();

// Lexicographic (wires, hops) distances from the powered set, settled at least
// up to `zone`. Entering an Empty tile costs one wire; conductive tiles are
// free. Hops make the predecessor relation acyclic across zero-cost stretches.
Grid<Key> wire_distances(const PuzzleBoard& board, Coord zone) {
  const TileGrid& tiles = board.tiles;
  Grid<Key> best(tiles.width(), tiles.height(), Key{kInf, kInf});
  using Entry = std::tuple<int, int, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (board.powered.cells()[i]) {
      best.cells()[i] = {0, 0};
      pq.emplace(0, 0, i);
    }
  }
  while (!pq.empty()) {
    const auto [w, hops, i] = pq.top();
    pq.pop();
    if (Key{w, hops} != best.cells()[i]) continue;
    const Coord c = tiles.coord(i);
    if (c == zone) break;
    for (int d = 0; d < 4; ++d) {
      const Coord n{c.x + kDx[d], c.y + kDy[d]};
      if (!tiles.in_bounds(n) || board.powered[n]) continue;
      const Key k{w + (tiles[n] == Tile::Empty ? 1 : 0), hops + 1};
      if (k < best[n]) {
        best[n] = k;
        pq.emplace(k.first, k.second, tiles.index(n.x, n.y));
      }
    }
  }
  return best;
}

// Walks predecessor chains back from `t`, emitting each distinct path (Empty
// tiles, powered end first) until `limit` paths are collected. The first path
// emitted is the scan-order one.
void collect_paths(const PuzzleBoard& board, const Grid<Key>& best, Coord t, std::vector<Coord>& tail,
                   std::vector<std::vector<Coord>>& out, std::set<std::vector<Coord>>& seen,
                   std::size_t limit) {
  if (out.size() >= limit) return;
  const TileGrid& tiles = board.tiles;
  if (board.powered[t]) {
    std::vector<Coord> path(tail.rbegin(), tail.rend());
    auto key = path;
    std::sort(key.begin(), key.end());
    if (seen.insert(std::move(key)).second) out.push_back(std::move(path));
    return;
  }
  const bool empty = tiles[t] == Tile::Empty;
  if (empty) tail.push_back(t);
  const Key want{best[t].first - (empty ? 1 : 0), best[t].second - 1};
  bool stepped = false;
  for (int d = 0; d < 4; ++d) {
    const Coord n{t.x + kDx[d], t.y + kDy[d]};
    if (tiles.in_bounds(n) && best[n] == want) {
      stepped = true;
      collect_paths(board, best, n, tail, out, seen, limit);
    }
  }
  if (!stepped) throw std::logic_error("shortest_wire_path: broken predecessor chain");
  if (empty) tail.pop_back();
}

void check_zone(const PuzzleBoard& board, Coord zone) {
  if (!board.tiles.in_bounds(zone)) throw std::out_of_range("zone outside the board");
  if (board.tiles[zone] != Tile::Residential)
    throw std::invalid_argument("target is not a residential zone");
}

// Minimum-wire paths to `zone`, scan-order path first; empty when unreachable.
std::vector<std::vector<Coord>> shortest_wire_paths(const PuzzleBoard& board, Coord zone, std::size_t limit) {
  check_zone(board, zone);
  if (board.powered[zone]) return {{}};
  if (!has_power_plant(board.tiles)) return {};
  const auto best = wire_distances(board, zone);
  if (best[zone].first == kInf) return {};
  std::vector<std::vector<Coord>> out;
  std::set<std::vector<Coord>> seen;
  std::vector<Coord> tail;
  collect_paths(board, best, zone, tail, out, seen, limit);
  return out;
}

UnreachableZone unreachable(Coord z) {
  return UnreachableZone("zone (" + std::to_string(z.x) + "," + std::to_string(z.y) + ") is unreachable");
}

// Wires needed to power the nearest unpowered zone; 0 when none is left.
int next_connection_cost(const PuzzleBoard& board) {
  int cost = 0;
  bool any = false;
  for (const Coord z : unpowered_zones(board)) {
    const auto paths = shortest_wire_paths(board, z, 1);
    const int c = paths.empty() ? kInf : static_cast<int>(paths.front().size());
    cost = any ? std::min(cost, c) : c;
    any = true;
  }
  return cost;
}

}  // namespace

std::optional<std::vector<Coord>> shortest_wire_path(const PuzzleBoard& board, Coord zone) {
  auto paths = shortest_wire_paths(board, zone, 1);
  if (paths.empty()) return std::nullopt;
  return std::move(paths.front());
}

WirePlan evaluate_builds(const PuzzleBoard& board, const std::vector<Coord>& builds, int horizon) {
  PuzzleBoard b = board;
  refresh_power(b);
  WirePlan plan;
  plan.builds = builds;
  plan.horizon = horizon;
  const auto zones = zones_of(b.tiles);
  for (const Coord z : zones)
    if (b.powered[z]) plan.connect_steps[z] = 0;

  const int steps = std::min<int>(horizon, static_cast<int>(builds.size()));
  for (int t = 0; t < steps; ++t) {
    if (!place_inplace(b, builds[static_cast<std::size_t>(t)], Tile::Wire)) continue;
    for (const Coord z : zones)
      if (b.powered[z] && !plan.connect_steps.count(z)) plan.connect_steps[z] = t;
  }
  for (const auto& [z, c] : plan.connect_steps) plan.episode_return += horizon - c;
  return plan;
}

WirePlan nearest_first_plan(const PuzzleBoard& board, int horizon) {
  PuzzleBoard b = board;
  refresh_power(b);
  std::vector<Coord> builds;
  for (;;) {
    const auto pending = unpowered_zones(b);
    if (pending.empty()) break;
    std::optional<std::vector<Coord>> best;
    Coord target{};
    for (const Coord z : pending) {
      auto path = shortest_wire_path(b, z);
      if (!path) throw unreachable(z);
      if (!best || path->size() < best->size()) {
        best = std::move(path);
        target = z;
      }
    }
    // Equal-length routes to the target can leave the next zone nearer or
    // further; take the one that leaves it nearest.
    if (pending.size() > 1) {
      int lowest = kInf;
      for (auto& path : shortest_wire_paths(b, target, kLookaheadPaths)) {
        PuzzleBoard trial = b;
        apply_wires(trial, path);
        const int next = next_connection_cost(trial);
        if (next < lowest) {
          lowest = next;
          best = std::move(path);
        }
      }
    }
    builds.insert(builds.end(), best->begin(), best->end());
    apply_wires(b, *best);
  }
  return evaluate_builds(board, builds, horizon);
}

namespace {

struct Search {
  int horizon = 0;
  std::vector<Coord> zones;
  // wire set -> best future return and the builds achieving it
  std::unordered_map<std::uint64_t, std::pair<long long, std::vector<Coord>>> memo;

  const std::pair<long long, std::vector<Coord>>& solve(const PuzzleBoard& b, std::uint64_t wires, int t) {
    if (auto it = memo.find(wires); it != memo.end()) return it->second;
    std::pair<long long, std::vector<Coord>> best{0, {}};
    bool first = true;
    if (t < horizon) {
      for (const Coord z : zones) {
        if (b.powered[z]) continue;
        const auto paths = shortest_wire_paths(b, z, std::numeric_limits<std::size_t>::max());
        if (paths.empty()) throw unreachable(z);
        for (const auto& path : paths) {
          PuzzleBoard next = b;
          std::uint64_t mask = wires;
          int step = t;
          for (const Coord c : path) {
            if (step >= horizon) break;
            place_inplace(next, c, Tile::Wire);
            mask |= std::uint64_t{1} << next.tiles.index(c.x, c.y);
            ++step;
          }
          const long long gained = credit(b, path, t);
          const auto& rest = solve(next, mask, step);
          if (first || gained + rest.first > best.first) {
            best.first = gained + rest.first;
            best.second = path;
            if (static_cast<int>(best.second.size()) > horizon - t) best.second.resize(static_cast<std::size_t>(horizon - t));
            best.second.insert(best.second.end(), rest.second.begin(), rest.second.end());
            first = false;
          }
        }
      }
    }
    return memo.emplace(wires, std::move(best)).first->second;
  }

  long long credit(const PuzzleBoard& from, const std::vector<Coord>& path, int t) const {
    PuzzleBoard b = from;
    long long gained = 0;
    for (std::size_t k = 0; k < path.size() && t + static_cast<int>(k) < horizon; ++k) {
      std::vector<bool> before;
      for (const Coord q : zones) before.push_back(b.powered[q]);
      place_inplace(b, path[k], Tile::Wire);
      for (std::size_t i = 0; i < zones.size(); ++i)
        if (!before[i] && b.powered[zones[i]]) gained += horizon - (t + static_cast<int>(k));
    }
    return gained;
  }
};

}  // namespace

WirePlan brute_force_optimal(const PuzzleBoard& board, int horizon) {
  if (board.width() > 8 || board.height() > 8 || zones_of(board.tiles).size() > 3)
    throw InstanceTooLarge();
  PuzzleBoard start = board;
  refresh_power(start);
  Search search;
  search.horizon = horizon;
  search.zones = zones_of(start.tiles);
  const auto& best = search.solve(start, 0, 0);
  return evaluate_builds(board, best.second, horizon);
}

nlohmann::json to_json(const WirePlan& plan) {
  nlohmann::json builds = nlohmann::json::array();
  for (const Coord c : plan.builds) builds.push_back({c.x, c.y});
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [z, c] : plan.connect_steps)
    steps[std::to_string(z.x) + "," + std::to_string(z.y)] = c;
  return {{"builds", builds},
          {"connect_steps", steps},
          {"return", plan.episode_return},
          {"horizon", plan.horizon}};
}

}  // namespace gymgrid
