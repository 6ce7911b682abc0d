#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gymgrid/grid.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid {

class MissingPowerSource : public std::runtime_error {
 public:
  MissingPowerSource() : std::runtime_error("missing power source") {}
};

// ---------------------------------------------------------------- Game of Life

/// One synchronous B3/S23 tick. Cells outside the board are dead.
GolBoard gol_step(const GolBoard& board);

/// Same tick computed as a zero-padded 3x3 neighbour-count correlation
/// (ring weights 1, centre 0) followed by the elementwise birth/survival rule.
GolBoard gol_step_conv(const GolBoard& board);

/// The fixed neighbour-count kernel used by gol_step_conv, row-major 3x3.
inline constexpr int kGolNeighbourKernel[9] = {1, 1, 1, 1, 0, 1, 1, 1, 1};

int count_alive(const GolBoard& board);

/// Each cell independently alive with probability p.
GolBoard random_gol_init(Rng& rng, int width, int height, double p = 0.2);

// ---------------------------------------------------------------- Power Puzzle

struct ZoneRange {
  int min = 1;
  int max = 5;
  friend bool operator==(const ZoneRange&, const ZoneRange&) = default;
};

/// Tiles reachable from every power plant through conductive tiles, 4-adjacent.
/// Throws MissingPowerSource when the grid holds no plant.
Mask power_flood(const TileGrid& tiles);

bool has_power_plant(const TileGrid& tiles);

/// Recomputes board.powered; a board without a plant is entirely unpowered.
void refresh_power(PuzzleBoard& board);

PuzzleBoard make_puzzle_board(TileGrid tiles);

int count_powered_residential(const PuzzleBoard& board);

struct Placement {
  PuzzleBoard board;
  bool changed = false;
};

/// Writes `tile` only when the target is Empty. Out-of-bounds throws.
Placement place(const PuzzleBoard& board, Coord at, Tile tile);

/// Always writes, including Empty (bulldoze).
Placement force_place(const PuzzleBoard& board, Coord at, Tile tile);

/// In-place forms of the above; return whether the tile grid changed.
bool place_inplace(PuzzleBoard& board, Coord at, Tile tile);
bool force_place_inplace(PuzzleBoard& board, Coord at, Tile tile);

/// k ~ Uniform{zones.min..zones.max} residential zones on distinct tiles, then
/// one plant on a further distinct tile.
PuzzleBoard random_power_layout(Rng& rng, int width, int height, ZoneRange zones = {});

// ---------------------------------------------------------------- text format
//
// One row per line, '\n' terminated. '.' dead/Empty, '#' alive, 'W' wire,
// 'R' residential, 'P' plant.

std::string to_text(const GolBoard& board);
std::string to_text(const TileGrid& tiles);
GolBoard gol_from_text(std::string_view text);
TileGrid tiles_from_text(std::string_view text);

char tile_char(Tile t) noexcept;
std::optional<Tile> tile_from_char(char c) noexcept;

}  // namespace gymgrid
