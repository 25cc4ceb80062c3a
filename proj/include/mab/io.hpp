#pragma once

#include <string>

namespace mab {

std::string read_file(const std::string& path);

/// Writes to a temp file in the target directory, then renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace mab
