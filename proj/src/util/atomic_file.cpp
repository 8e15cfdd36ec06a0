#include "vhp/util/atomic_file.hpp"

#include <fstream>
#include <system_error>
#include <unistd.h>

#include "vhp/error.hpp"

namespace vhp {

void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  try {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    fill(out);
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move output into place at '" + path.string() + "'");
  }
}

}  // namespace vhp
