#include <fstream>
#include <sstream>

#include "rmb/errors.h"
#include "rmb/pipeline.h"

namespace rmb {

void save_bandit(const BanditState& state, const std::filesystem::path& path) {
  const std::string document = serialize_bandit(state);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io error", "cannot write " + tmp.string());
    out << document;
    if (!out) throw Error("io error", "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

BanditState load_bandit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open bandit state " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_bandit(buffer.str());
}

}  // namespace rmb
