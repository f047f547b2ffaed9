#pragma once

#include <optional>
#include <string_view>

namespace rabbit {

enum class TaskKind { Wash, Rinse, Dry, FreeMotion };

inline std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Wash: return "wash";
    case TaskKind::Rinse: return "rinse";
    case TaskKind::Dry: return "dry";
    case TaskKind::FreeMotion: return "free_motion";
  }
  return "unknown";
}

inline std::optional<TaskKind> parse_task(std::string_view name) {
  if (name == "wash") return TaskKind::Wash;
  if (name == "rinse") return TaskKind::Rinse;
  if (name == "dry") return TaskKind::Dry;
  if (name == "free_motion") return TaskKind::FreeMotion;
  return std::nullopt;
}

}  // namespace rabbit
