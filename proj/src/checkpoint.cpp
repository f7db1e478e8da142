#include "gdwct/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace gdwct {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[6] = {'G', 'D', 'W', 'C', 'T', '1'};
constexpr std::string_view kStatePrefix = "state.";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}
  void bytes(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) throw FormatError("checkpoint truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str(std::uint64_t n) {
    if (n > buf_.size() - pos_) throw FormatError("checkpoint truncated");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  std::string header = format_config(ckpt.config);
  for (const auto& [key, value] : ckpt.state) header += std::string(kStatePrefix) + key + " = " + value + "\n";

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.u64(header.size());
    w.bytes(header.data(), header.size());
    w.u64(ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
      w.u32(static_cast<std::uint32_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.u32(static_cast<std::uint32_t>(t.ndim()));
      for (std::size_t d : t.shape()) w.u64(d);
      w.bytes(t.data().data(), t.numel() * sizeof(double));
    }
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf));

  char magic[sizeof kMagic];
  try {
    r.bytes(magic, sizeof magic);
  } catch (const FormatError&) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");

  const std::string header = r.str(r.u64());
  std::string config_text;
  Checkpoint ckpt;
  std::size_t pos = 0;
  while (pos < header.size()) {
    const std::size_t eol = std::min(header.find('\n', pos), header.size());
    const std::string line = header.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.rfind(kStatePrefix, 0) == 0) {
      const std::size_t eq = line.find(" = ");
      if (eq == std::string::npos) throw FormatError("malformed checkpoint state line: " + line);
      ckpt.state[line.substr(kStatePrefix.size(), eq - kStatePrefix.size())] = line.substr(eq + 3);
    } else {
      config_text += line + "\n";
    }
  }
  ckpt.config = parse_config(config_text);

  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d != 0 && numel > r.remaining() / d) throw FormatError("checkpoint truncated");
      numel *= d;
    }
    if (numel > r.remaining() / sizeof(double)) throw FormatError("checkpoint truncated");
    std::vector<double> data(numel);
    r.bytes(data.data(), numel * sizeof(double));
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after records");
  return ckpt;
}

void load_parameters(const ParameterList& params, const Checkpoint& ckpt) {
  for (const auto& [name, param] : params) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw FormatError("checkpoint has no tensor '" + name + "'");
    if (src->shape() != param.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(src->shape()) +
                        ", model expects " + shape_str(param.shape()));
    }
    Tensor dst = param;
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }
}

TranslationModel load_model(const Checkpoint& ckpt) {
  TranslationModel model = TranslationModel::make(ckpt.config.net, ckpt.config.seed);
  load_parameters(model.all_parameters(), ckpt);
  return model;
}

}  // namespace gdwct
