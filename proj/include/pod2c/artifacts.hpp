#pragma once

#include "pod2c/lqg.hpp"

#include <string>

namespace pod2c {

struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lossless "%.17g" rendering, shared by every artifact and CSV writer so
// identical runs produce byte-identical files.
std::string fmt17(double v);

std::uint64_t fnv1a(const std::string& bytes);

// Versioned flat text artifacts with a trailing FNV-1a checksum line.
void save_trajectory(const Trajectory& traj, double dt, const std::string& path);
Trajectory load_trajectory(const std::string& path, double* dt = nullptr);

void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace pod2c
