#include "smoe/error.hpp"
#include "smoe/trainer.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace smoe::train {

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (cfg.grid.k_w < 1 || cfg.grid.k_h < 1 || cfg.grid.k_t < 1) fail("grid dimensions must be >= 1");
  if (cfg.p != 0 && !pmm::is_valid_complexity(cfg.p)) fail("p must be 0, 2, 4, 6 or 8");
  if (cfg.train_motion && cfg.p == 0) fail("train_motion needs a motion model (p > 0)");
  if (!(cfg.lr.chol > 0 && cfg.lr.pi > 0 && cfg.lr.mu > 0 && cfg.lr.experts > 0 && cfg.lr.motion > 0)) {
    fail("learning rates must be positive");
  }
  if (cfg.pretrain_iters < 0 || cfg.sparsify_steps < 0 || cfg.iters_per_step < 0 || cfg.finetune_iters < 0) {
    fail("iteration counts must be >= 0");
  }
  if (!(cfg.s_range[0] < cfg.s_range[1])) fail("s_range must be increasing");
  if (cfg.batch_frames < 1) fail("batch_frames must be >= 1");
  if (!(cfg.adam.beta1 >= 0 && cfg.adam.beta1 < 1 && cfg.adam.beta2 >= 0 && cfg.adam.beta2 < 1 &&
        cfg.adam.epsilon > 0)) {
    fail("Adam constants out of range");
  }
  if (cfg.ransac.iterations < 1 || !(cfg.ransac.inlier_threshold > 0)) fail("RANSAC settings out of range");
  if (cfg.gme_grid_step < 4) fail("gme_grid_step must be >= 4");
  if (!(cfg.cull_margin > 0)) fail("cull_margin must be positive");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T number(const std::string& text, const std::string& where) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorCode::ConfigParse, where + ": '" + text + "' is not a valid number");
  }
  return value;
}

bool flag(const std::string& text, const std::string& where) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorCode::ConfigParse, where + ": '" + text + "' is not a boolean");
}

}  // namespace

TrainConfig parse_config(std::istream& in, TrainConfig cfg) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigParse, where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "grid") {
      const auto parts = split(value, ',');
      if (parts.size() != 3) throw Error(ErrorCode::ConfigParse, where + ": grid needs kw,kh,kt");
      cfg.grid = {number<int>(parts[0], where), number<int>(parts[1], where), number<int>(parts[2], where)};
    } else if (key == "p") {
      cfg.p = value == "none" ? 0 : number<int>(value, where);
    } else if (key == "train_motion") {
      cfg.train_motion = flag(value, where);
    } else if (key == "slopes") {
      cfg.slopes = flag(value, where);
    } else if (key == "lr_A") {
      cfg.lr.chol = number<double>(value, where);
    } else if (key == "lr_pi") {
      cfg.lr.pi = number<double>(value, where);
    } else if (key == "lr_mu") {
      cfg.lr.mu = number<double>(value, where);
    } else if (key == "lr_m") {
      cfg.lr.experts = number<double>(value, where);
    } else if (key == "lr_H") {
      cfg.lr.motion = number<double>(value, where);
    } else if (key == "pretrain_iters") {
      cfg.pretrain_iters = number<long>(value, where);
    } else if (key == "sparsify_steps") {
      cfg.sparsify_steps = number<int>(value, where);
    } else if (key == "iters_per_step") {
      cfg.iters_per_step = number<long>(value, where);
    } else if (key == "finetune_iters") {
      cfg.finetune_iters = number<long>(value, where);
    } else if (key == "s_range") {
      const auto parts = split(value, ',');
      if (parts.size() != 2) throw Error(ErrorCode::ConfigParse, where + ": s_range needs min,max");
      cfg.s_range = {number<double>(parts[0], where), number<double>(parts[1], where)};
    } else if (key == "batch_frames") {
      cfg.batch_frames = number<int>(value, where);
    } else if (key == "seed") {
      cfg.seed = number<std::uint64_t>(value, where);
      cfg.ransac.seed = cfg.seed;
    } else if (key == "adam_beta1") {
      cfg.adam.beta1 = number<double>(value, where);
    } else if (key == "adam_beta2") {
      cfg.adam.beta2 = number<double>(value, where);
    } else if (key == "adam_eps") {
      cfg.adam.epsilon = number<double>(value, where);
    } else if (key == "ransac_iterations") {
      cfg.ransac.iterations = number<int>(value, where);
    } else if (key == "ransac_threshold") {
      cfg.ransac.inlier_threshold = number<double>(value, where);
    } else if (key == "gme_grid_step") {
      cfg.gme_grid_step = number<int>(value, where);
    } else if (key == "cull_margin") {
      cfg.cull_margin = number<double>(value, where);
    } else {
      throw Error(ErrorCode::ConfigParse, where + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

}  // namespace smoe::train
