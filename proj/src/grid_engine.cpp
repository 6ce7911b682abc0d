#include "gymgrid/grid_engine.hpp"

#include <deque>

namespace gymgrid {

GolBoard::GolBoard(int width, int height) : GolBoard(Mask(width, height, 0)) {}

GolBoard::GolBoard(Mask alive) : alive_(std::move(alive)) {
  if (alive_.width() < 3 || alive_.height() < 3)
    throw std::invalid_argument("Game of Life board must be at least 3x3");
  for (auto& v : alive_.cells())
    if (v > 1) throw std::invalid_argument("Game of Life cells must be 0 or 1");
}

namespace {

inline std::uint8_t life_rule(bool alive, int neighbours) {
  return (neighbours == 3 || (alive && neighbours == 2)) ? 1 : 0;
}

}  // namespace

GolBoard gol_step(const GolBoard& board) {
  const int w = board.width();
  const int h = board.height();
  Mask next(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if ((dx == 0 && dy == 0) || xx < 0 || xx >= w) continue;
          n += board(xx, yy);
        }
      }
      next(x, y) = life_rule(board(x, y), n);
    }
  }
  return GolBoard(std::move(next));
}

GolBoard gol_step_conv(const GolBoard& board) {
  const int w = board.width();
  const int h = board.height();
  // Zero-padded copy so the correlation needs no bounds checks.
  Grid<int> padded(w + 2, h + 2, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) padded(x + 1, y + 1) = board(x, y);

  Mask next(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) n += kGolNeighbourKernel[ky * 3 + kx] * padded(x + kx, y + ky);
      next(x, y) = life_rule(board(x, y), n);
    }
  }
  return GolBoard(std::move(next));
}

int count_alive(const GolBoard& board) {
  int n = 0;
  for (auto v : board.alive().cells()) n += v;
  return n;
}

GolBoard random_gol_init(Rng& rng, int width, int height, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("alive probability must lie in [0,1]");
  Mask alive(width, height, 0);
  for (auto& v : alive.cells()) v = rng.bernoulli(p) ? 1 : 0;
  return GolBoard(std::move(alive));
}

bool has_power_plant(const TileGrid& tiles) {
  for (auto t : tiles.cells())
    if (t == Tile::PowerPlant) return true;
  return false;
}

Mask power_flood(const TileGrid& tiles) {
  Mask powered(tiles.width(), tiles.height(), 0);
  std::deque<Coord> frontier;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (tiles.cells()[i] == Tile::PowerPlant) {
      powered.cells()[i] = 1;
      frontier.push_back(tiles.coord(i));
    }
  }
  if (frontier.empty()) throw MissingPowerSource();

  constexpr int dx[4] = {0, -1, 1, 0};
  constexpr int dy[4] = {-1, 0, 0, 1};
  while (!frontier.empty()) {
    const Coord c = frontier.front();
    frontier.pop_front();
    for (int d = 0; d < 4; ++d) {
      const Coord n{c.x + dx[d], c.y + dy[d]};
      if (!tiles.in_bounds(n) || powered[n] || !conducts(tiles[n])) continue;
      powered[n] = 1;
      frontier.push_back(n);
    }
  }
  return powered;
}

void refresh_power(PuzzleBoard& board) {
  if (has_power_plant(board.tiles))
    board.powered = power_flood(board.tiles);
  else
    board.powered = Mask(board.tiles.width(), board.tiles.height(), 0);
}

PuzzleBoard make_puzzle_board(TileGrid tiles) {
  PuzzleBoard board{std::move(tiles), {}};
  refresh_power(board);
  return board;
}

int count_powered_residential(const PuzzleBoard& board) {
  int n = 0;
  for (std::size_t i = 0; i < board.tiles.size(); ++i)
    if (board.tiles.cells()[i] == Tile::Residential && board.powered.cells()[i]) ++n;
  return n;
}

bool place_inplace(PuzzleBoard& board, Coord at, Tile tile) {
  Tile& target = board.tiles.at(at.x, at.y);
  if (target != Tile::Empty || tile == Tile::Empty) return false;
  target = tile;
  refresh_power(board);
  return true;
}

bool force_place_inplace(PuzzleBoard& board, Coord at, Tile tile) {
  Tile& target = board.tiles.at(at.x, at.y);
  if (target == tile) return false;
  target = tile;
  refresh_power(board);
  return true;
}

Placement place(const PuzzleBoard& board, Coord at, Tile tile) {
  Placement out{board, false};
  out.changed = place_inplace(out.board, at, tile);
  return out;
}

Placement force_place(const PuzzleBoard& board, Coord at, Tile tile) {
  Placement out{board, false};
  out.changed = force_place_inplace(out.board, at, tile);
  return out;
}

PuzzleBoard random_power_layout(Rng& rng, int width, int height, ZoneRange zones) {
  if (width < 1 || height < 1) throw std::invalid_argument("board dimensions must be positive");
  if (zones.min < 1 || zones.max < zones.min)
    throw std::invalid_argument("zone range must satisfy 1 <= min <= max");
  const auto area = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  if (area < static_cast<std::uint64_t>(zones.max) + 1)
    throw std::invalid_argument("board too small for " + std::to_string(zones.max) +
                                " zones and a power plant");

  TileGrid tiles(width, height, Tile::Empty);
  auto drop = [&](Tile t) {
    for (;;) {
      const auto i = static_cast<std::size_t>(rng.below(area));
      if (tiles.cells()[i] == Tile::Empty) {
        tiles.cells()[i] = t;
        return;
      }
    }
  };
  const auto k = static_cast<int>(rng.range(zones.min, zones.max));
  for (int z = 0; z < k; ++z) drop(Tile::Residential);
  drop(Tile::PowerPlant);
  return make_puzzle_board(std::move(tiles));
}

// ---------------------------------------------------------------- text format

char tile_char(Tile t) noexcept {
  switch (t) {
    case Tile::Empty: return '.';
    case Tile::Wire: return 'W';
    case Tile::Residential: return 'R';
    case Tile::PowerPlant: return 'P';
  }
  return '?';
}

std::optional<Tile> tile_from_char(char c) noexcept {
  switch (c) {
    case '.': return Tile::Empty;
    case 'W': return Tile::Wire;
    case 'R': return Tile::Residential;
    case 'P': return Tile::PowerPlant;
    default: return std::nullopt;
  }
}

namespace {

std::vector<std::string_view> split_rows(std::string_view text) {
  std::vector<std::string_view> rows;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view row = text.substr(0, nl);
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    rows.push_back(row);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  if (rows.empty()) throw std::invalid_argument("board text is empty");
  const auto width = rows.front().size();
  if (width == 0) throw std::invalid_argument("board text has an empty row");
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw std::invalid_argument("board text row " + std::to_string(r) + " has width " +
                                  std::to_string(rows[r].size()) + ", expected " +
                                  std::to_string(width));
  return rows;
}

template <typename T, typename F>
std::string emit(const Grid<T>& grid, F&& to_char) {
  std::string out;
  out.reserve(grid.size() + static_cast<std::size_t>(grid.height()));
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) out.push_back(to_char(grid(x, y)));
    out.push_back('\n');
  }
  return out;
}

std::string bad_char(char c, std::size_t row, std::size_t col) {
  return std::string("unexpected character '") + c + "' at row " + std::to_string(row) +
         ", column " + std::to_string(col);
}

}  // namespace

std::string to_text(const GolBoard& board) {
  return emit(board.alive(), [](std::uint8_t v) { return v ? '#' : '.'; });
}

std::string to_text(const TileGrid& tiles) { return emit(tiles, tile_char); }

GolBoard gol_from_text(std::string_view text) {
  const auto rows = split_rows(text);
  Mask alive(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()), 0);
  for (std::size_t y = 0; y < rows.size(); ++y) {
    for (std::size_t x = 0; x < rows[y].size(); ++x) {
      const char c = rows[y][x];
      if (c != '.' && c != '#') throw std::invalid_argument(bad_char(c, y, x));
      alive(static_cast<int>(x), static_cast<int>(y)) = c == '#' ? 1 : 0;
    }
  }
  return GolBoard(std::move(alive));
}

TileGrid tiles_from_text(std::string_view text) {
  const auto rows = split_rows(text);
  TileGrid tiles(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
  for (std::size_t y = 0; y < rows.size(); ++y) {
    for (std::size_t x = 0; x < rows[y].size(); ++x) {
      const auto t = tile_from_char(rows[y][x]);
      if (!t) throw std::invalid_argument(bad_char(rows[y][x], y, x));
      tiles(static_cast<int>(x), static_cast<int>(y)) = *t;
    }
  }
  return tiles;
}

}  // namespace gymgrid
