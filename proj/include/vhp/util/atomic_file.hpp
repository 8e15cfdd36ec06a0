#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>

namespace vhp {

/// Writes through `fill` into a sibling temp file, then renames it over `path`.
/// A failed write leaves any previous file untouched.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill);

}  // namespace vhp
