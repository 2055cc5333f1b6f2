#include "grasp/checkpoint.hpp"

#include "grasp/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace grasp {

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

namespace {

constexpr char kMagic[8] = {'G', 'R', 'S', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

Json terms_json(const LossTerms& t) {
  return {{"align", t.align}, {"ret", t.retention},    {"rank", t.rank}, {"inv", t.invariance},
          {"pres", t.preservation}, {"ortho", t.ortho}, {"total", t.total}};
}

LossTerms terms_from(const Json& j) {
  LossTerms t;
  t.align = j.at("align");
  t.retention = j.at("ret");
  t.rank = j.at("rank");
  t.invariance = j.at("inv");
  t.preservation = j.at("pres");
  t.ortho = j.at("ortho");
  t.total = j.at("total");
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const ParamSet& p = ck.model.params();
  Json h;
  h["dim"] = ck.model.dim();
  h["transform"] = to_json(ck.model.spec());
  h["contract"] = to_json(ck.contract);
  h["log_temperatures"] = std::vector<double>(p.log_temperatures.data(),
                                              p.log_temperatures.data() + p.log_temperatures.size());
  h["epoch"] = ck.epoch;
  h["val_stair"] = ck.val_stair;
  h["val_drift"] = ck.val_drift;
  Json blocks = Json::array();
  for (const auto& b : p.blocks) blocks.push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}});
  h["blocks"] = blocks;
  Json trace = Json::array();
  for (const auto& r : ck.trace) {
    trace.push_back({{"epoch", r.epoch},
                     {"terms", terms_json(r.terms)},
                     {"enabled", r.enabled},
                     {"val_stair", r.val_stair},
                     {"val_hard_avg", r.val_hard_avg},
                     {"val_drift", r.val_drift}});
  }
  h["trace"] = trace;
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& b : p.blocks) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = b.value;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kMalformed, path + " is not a checkpoint");
  }
  if (version != kVersion) throw Error(ErrorCode::kMalformed, "unsupported checkpoint version " + std::to_string(version));
  if (len > (1ull << 30)) throw Error(ErrorCode::kMalformed, "implausible header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::kMalformed, "truncated checkpoint header");

  Checkpoint ck;
  try {
    const Json h = Json::parse(header);
    const int dim = h.at("dim");
    const TransformSpec spec = transform_from_json(h.at("transform"));
    ck.contract = contract_from_json(h.at("contract"), dim);
    ParamSet p;
    const auto temps = h.at("log_temperatures").get<std::vector<double>>();
    p.log_temperatures = Eigen::Map<const Vector>(temps.data(), static_cast<Eigen::Index>(temps.size()));
    for (const auto& b : h.at("blocks")) {
      const Eigen::Index rows = b.at("rows"), cols = b.at("cols");
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
      in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
      if (!in) throw Error(ErrorCode::kMalformed, "truncated parameter blob");
      p.blocks.push_back({b.at("name").get<std::string>(), Matrix(rm)});
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kMalformed, "trailing bytes after blob");
    const TransformModel reference = TransformModel::initialize(spec, dim, static_cast<int>(temps.size()), 0);
    const ParamSet& ref = reference.params();
    if (ref.blocks.size() != p.blocks.size()) throw Error(ErrorCode::kMalformed, "block list does not match variant");
    for (std::size_t i = 0; i < ref.blocks.size(); ++i) {
      if (ref.blocks[i].name != p.blocks[i].name || ref.blocks[i].value.rows() != p.blocks[i].value.rows() ||
          ref.blocks[i].value.cols() != p.blocks[i].value.cols()) {
        throw Error(ErrorCode::kMalformed, "block '" + p.blocks[i].name + "' does not match variant");
      }
    }
    if (static_cast<std::size_t>(temps.size()) != ck.contract.size()) {
      throw Error(ErrorCode::kMalformed, "temperature count differs from |K|");
    }
    ck.model = TransformModel(spec, dim, std::move(p));
    ck.epoch = h.at("epoch");
    ck.val_stair = h.at("val_stair");
    ck.val_drift = h.at("val_drift");
    for (const auto& r : h.at("trace")) {
      EpochRecord rec;
      rec.epoch = r.at("epoch");
      rec.terms = terms_from(r.at("terms"));
      rec.enabled = r.at("enabled").get<std::array<bool, kNumNegTypes>>();
      rec.val_stair = r.at("val_stair");
      rec.val_hard_avg = r.at("val_hard_avg");
      rec.val_drift = r.at("val_drift");
      ck.trace.push_back(rec);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

}  // namespace grasp
