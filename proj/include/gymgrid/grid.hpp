#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gymgrid {

struct Coord {
  int x = 0;
  int y = 0;
  friend constexpr auto operator<=>(const Coord&, const Coord&) = default;
};

/// Dense row-major 2D grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), cells_(checked_area(width, height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool in_bounds(Coord c) const noexcept { return in_bounds(c.x, c.y); }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  Coord coord(std::size_t i) const noexcept {
    return {static_cast<int>(i % static_cast<std::size_t>(width_)),
            static_cast<int>(i / static_cast<std::size_t>(width_))};
  }

  T& operator()(int x, int y) noexcept { return cells_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return cells_[index(x, y)]; }
  T& operator[](Coord c) noexcept { return cells_[index(c.x, c.y)]; }
  const T& operator[](Coord c) const noexcept { return cells_[index(c.x, c.y)]; }

  T& at(int x, int y) {
    if (!in_bounds(x, y)) throw std::out_of_range(oob_message(x, y));
    return (*this)(x, y);
  }
  const T& at(int x, int y) const {
    if (!in_bounds(x, y)) throw std::out_of_range(oob_message(x, y));
    return (*this)(x, y);
  }

  std::vector<T>& cells() noexcept { return cells_; }
  const std::vector<T>& cells() const noexcept { return cells_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_area(int w, int h) {
    if (w < 0 || h < 0) throw std::invalid_argument("grid dimensions must be non-negative");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
  std::string oob_message(int x, int y) const {
    return "tile (" + std::to_string(x) + "," + std::to_string(y) + ") outside " +
           std::to_string(width_) + "x" + std::to_string(height_) + " board";
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> cells_;
};

using Mask = Grid<std::uint8_t>;

enum class Tile : std::uint8_t { Empty = 0, Wire = 1, Residential = 2, PowerPlant = 3 };

constexpr bool conducts(Tile t) noexcept { return t != Tile::Empty; }

using TileGrid = Grid<Tile>;

/// Game of Life board. Every board is at least 3x3.
class GolBoard {
 public:
  GolBoard(int width, int height);
  explicit GolBoard(Mask alive);

  int width() const noexcept { return alive_.width(); }
  int height() const noexcept { return alive_.height(); }
  const Mask& alive() const noexcept { return alive_; }

  bool operator()(int x, int y) const noexcept { return alive_(x, y) != 0; }
  void set(int x, int y, bool value) { alive_.at(x, y) = value ? 1 : 0; }

  friend bool operator==(const GolBoard&, const GolBoard&) = default;

 private:
  Mask alive_;
};

/// Power Puzzle board: tile layer plus the derived powered mask.
struct PuzzleBoard {
  TileGrid tiles;
  Mask powered;

  int width() const noexcept { return tiles.width(); }
  int height() const noexcept { return tiles.height(); }

  friend bool operator==(const PuzzleBoard&, const PuzzleBoard&) = default;
};

}  // namespace gymgrid
