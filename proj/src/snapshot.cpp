#include "hwfp/snapshot.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hwfp/error.hpp"

namespace hwfp {

void save_snapshot(const Backend& backend, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
    out << backend.to_json().dump();
    if (!out.flush()) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(ErrorCode::Io, "cannot move snapshot into " + path);
  }
}

std::unique_ptr<Backend> load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Malformed, path + ": " + e.what());
  }
  return Backend::from_json(j);
}

}  // namespace hwfp
