#pragma once

#include <string>

#include "zsd/error.hpp"

namespace zsd {

// Evaluation / inference regimes.
//   ZSD  - detection, unseen categories only
//   GZSD - detection, seen + unseen jointly
//   ZSI  - instance segmentation (mask-IoU matching), unseen only
//   GZSI - instance segmentation, seen + unseen jointly
enum class TaskMode { ZSD, GZSD, ZSI, GZSI };

inline bool mode_is_generalized(TaskMode m) { return m == TaskMode::GZSD || m == TaskMode::GZSI; }
inline bool mode_uses_masks(TaskMode m) { return m == TaskMode::ZSI || m == TaskMode::GZSI; }

inline std::string to_string(TaskMode m) {
    switch (m) {
        case TaskMode::ZSD: return "zsd";
        case TaskMode::GZSD: return "gzsd";
        case TaskMode::ZSI: return "zsi";
        case TaskMode::GZSI: return "gzsi";
    }
    return "zsd";
}

inline TaskMode parse_task_mode(const std::string& s) {
    if (s == "zsd") return TaskMode::ZSD;
    if (s == "gzsd") return TaskMode::GZSD;
    if (s == "zsi") return TaskMode::ZSI;
    if (s == "gzsi") return TaskMode::GZSI;
    throw ConfigError("unknown task mode: '" + s + "' (expected zsd|gzsd|zsi|gzsi)");
}

}  // namespace zsd
