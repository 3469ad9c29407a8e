// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Small fixture builders shared by the unit suites.

#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dualmem/dualmem.hpp"

namespace dualmem::testing {

inline std::shared_ptr<const BackgroundStats> identity_bg(int d, std::uint64_t pi = 100, double scale = 1.0) {
  return std::make_shared<const BackgroundStats>(make_background(Vec::Zero(d), scale * Mat::Identity(d, d), pi));
}

inline RegionRecord region(std::string id, std::string image, std::vector<float> f, float score = 0.5f,
                           BoundingBox box = {0, 0, 10, 10}) {
  RegionRecord r;
  r.region_id = std::move(id);
  r.image_id = std::move(image);
  r.box = box;
  r.score = score;
  r.feature = std::move(f);
  return r;
}

inline Config small_config(int d) {
  Config c;
  c.d = d;
  return c;
}

/// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("dualmem_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace dualmem::testing
