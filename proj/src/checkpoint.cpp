#include "g2k/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "g2k/error.hpp"

namespace g2k::checkpoint {
namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse(const std::string& tok, const char* what) {
  T v{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    fail(ErrorKind::kParse, std::string("checkpoint: bad ") + what + " '" + tok + "'");
  }
  return v;
}

std::string next_line(std::istream& in, const char* expecting) {
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorKind::kParse, std::string("checkpoint truncated, expected ") + expecting);
  }
  return line;
}

}  // namespace

void write(std::ostream& out, const Checkpoint& ckpt) {
  out << kFormatTag << '\n';
  out << "config_hash " << ckpt.config.hash() << '\n';
  for (const auto& [k, v] : ckpt.config.values()) out << "config " << k << ' ' << v << '\n';
  out << "epoch " << ckpt.epoch << '\n';
  out << "loss_history " << ckpt.loss_history.size();
  for (double l : ckpt.loss_history) out << ' ' << num(l);
  out << '\n';
  for (const auto& p : ckpt.params) {
    out << "param " << p.name << ' ' << p.values.rows() << ' ' << p.values.cols()
        << ' ' << p.init.to_string() << ' ' << (p.trainable ? 1 : 0) << '\n';
    for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.values.cols(); ++c) {
        out << (c ? " " : "") << num(p.values(r, c));
      }
      out << '\n';
    }
  }
  out << "end\n";
}

Checkpoint read(std::istream& in) {
  Checkpoint ckpt;
  if (next_line(in, "header") != kFormatTag) {
    fail(ErrorKind::kParse, std::string("not a ") + kFormatTag + " checkpoint");
  }
  std::string stored_hash;
  for (;;) {
    const std::string line = next_line(in, "record");
    if (line == "end") break;
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    if (tag == "config_hash") {
      fields >> stored_hash;
    } else if (tag == "config") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.config.set(key, value);
    } else if (tag == "epoch") {
      std::string v;
      fields >> v;
      ckpt.epoch = parse<int>(v, "epoch");
    } else if (tag == "loss_history") {
      std::string count_tok;
      fields >> count_tok;
      const auto count = parse<std::size_t>(count_tok, "loss count");
      for (std::size_t i = 0; i < count; ++i) {
        std::string v;
        if (!(fields >> v)) fail(ErrorKind::kParse, "checkpoint: short loss history");
        ckpt.loss_history.push_back(parse<double>(v, "loss"));
      }
    } else if (tag == "param") {
      std::string name, rows_tok, cols_tok, init_tok, trainable_tok;
      fields >> name >> rows_tok >> cols_tok >> init_tok >> trainable_tok;
      StoredParam p;
      p.name = name;
      p.init = ad::InitSpec::parse(init_tok);
      p.trainable = parse<int>(trainable_tok, "trainable flag") != 0;
      const auto rows = parse<Eigen::Index>(rows_tok, "rows");
      const auto cols = parse<Eigen::Index>(cols_tok, "cols");
      p.values.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        std::istringstream row(next_line(in, "parameter row"));
        for (Eigen::Index c = 0; c < cols; ++c) {
          std::string v;
          if (!(row >> v)) fail(ErrorKind::kParse, "checkpoint: short row in " + name);
          p.values(r, c) = parse<double>(v, "value");
        }
      }
      ckpt.params.push_back(std::move(p));
    } else {
      fail(ErrorKind::kParse, "checkpoint: unknown record '" + tag + "'");
    }
  }
  if (stored_hash != ckpt.config.hash()) {
    fail(ErrorKind::kIntegrity, "checkpoint config hash mismatch");
  }
  return ckpt;
}

void save(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint '" + path + "'");
  write(out, ckpt);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  return read(in);
}

Checkpoint capture(const sri::G2KModel& model, const config::RunConfig& config,
                   int epoch, const std::vector<double>& loss_history) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.epoch = epoch;
  ckpt.loss_history = loss_history;
  for (const auto& p : model.params().all()) {
    ckpt.params.push_back({p.name, p.init, p.trainable, p.value.data()});
  }
  return ckpt;
}

void restore(sri::G2KModel& model, const Checkpoint& ckpt) {
  auto& store = model.params();
  if (store.size() != ckpt.params.size()) {
    fail(ErrorKind::kConfigMismatch,
         "checkpoint holds " + std::to_string(ckpt.params.size()) +
             " parameters, model has " + std::to_string(store.size()));
  }
  for (const auto& sp : ckpt.params) {
    if (!store.contains(sp.name)) {
      fail(ErrorKind::kConfigMismatch, "model has no parameter '" + sp.name + "'");
    }
    auto& p = store.get(sp.name);
    if (p.value.rows() != sp.values.rows() || p.value.cols() != sp.values.cols()) {
      fail(ErrorKind::kConfigMismatch, "shape mismatch for '" + sp.name + "'");
    }
    p.value.mutable_data() = sp.values;
    p.init = sp.init;
    p.trainable = sp.trainable;
  }
}

}  // namespace g2k::checkpoint
