#pragma once

#include <cstddef>
#include <vector>

#include "rigkit/error.h"

namespace rigkit {

// Dense row-major H x W image-shaped container.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, const T& fill = T())
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              fill) {
    RIGKIT_CHECK(rows >= 0 && cols >= 0, ErrorCode::kInvalidInput,
                 "negative grid shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) {
    return data_[static_cast<std::size_t>(row) * cols_ + col];
  }
  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * cols_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool SameShape(int rows, int cols) const {
    return rows_ == rows && cols_ == cols;
  }
  template <typename U>
  bool SameShape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace rigkit
