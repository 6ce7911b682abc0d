#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/grid.hpp"

namespace gymgrid {

class UnreachableZone : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InstanceTooLarge : public std::runtime_error {
 public:
  InstanceTooLarge() : std::runtime_error("instance too large for exhaustive oracle") {}
};

/// An ordered list of wire builds and what they earn.
///
/// `connect_steps` maps each residential tile to the first step index whose
/// reward counts it (0 for zones powered from the start). Under the per-step
/// reward model the episode return is therefore
///   sum over zones with connect step c < horizon of (horizon - c).
struct WirePlan {
  std::vector<Coord> builds;
  std::map<Coord, int> connect_steps;
  long long episode_return = 0;
  int horizon = 0;
};

/// Minimum number of Empty tiles that, wired, power `zone`. Breadth-first over
/// 4-adjacency from the currently powered set; existing wires and other zones
/// conduct for free. Among equal-length paths the one found by walking back
/// from the zone through the lowest row-major predecessor is returned.
/// Returns nullopt when the board has no power source to grow from.
/// Throws std::invalid_argument unless `zone` is an unpowered Residential tile.
std::optional<std::vector<Coord>> shortest_wire_path(const PuzzleBoard& board, Coord zone);

/// Repeatedly connects the unpowered zone with the shortest wire path (ties
/// by zone scan order) until every zone is powered.
WirePlan nearest_first_plan(const PuzzleBoard& board, int horizon = 100);

/// Exhaustive maximum over zone connection orders, each order realised with
/// shortest paths from the running powered set. Boards up to 8x8 with at most
/// 3 zones; larger instances throw InstanceTooLarge.
WirePlan brute_force_optimal(const PuzzleBoard& board, int horizon = 100);

/// Return of an arbitrary build list under the per-step reward model:
/// build t is applied at step t, then the step's reward is the number of
/// powered zones. Builds on occupied tiles are no-ops.
WirePlan evaluate_builds(const PuzzleBoard& board, const std::vector<Coord>& builds, int horizon);

nlohmann::json to_json(const WirePlan& plan);

}  // namespace gymgrid
