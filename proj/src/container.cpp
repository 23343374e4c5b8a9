#include "jdsi/container.hpp"

#include "jdsi/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace jdsi::io {

std::size_t dtype_size(DType t)
{
  switch (t) {
  case DType::c64:
    return 8;
  case DType::c128:
    return 16;
  case DType::f32:
    return 4;
  case DType::f64:
    return 8;
  case DType::u8:
    return 1;
  }
  throw InvalidInput("unknown dtype");
}

std::size_t Record::elements() const
{
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
}

namespace {

template <typename U>
void put(std::vector<std::uint8_t> &out, U v)
{
  std::uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

class Reader
{
public:
  explicit Reader(std::vector<std::uint8_t> const &b) : bytes_(b) {}

  template <typename U>
  U get(char const *what)
  {
    U v;
    need(sizeof(U), what);
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void take(void *dst, std::size_t n, char const *what)
  {
    need(n, what);
    if (n) {
      std::memcpy(dst, bytes_.data() + pos_, n);
    }
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n, char const *what)
  {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("truncated container while reading ") + what, pos_);
    }
  }
  std::vector<std::uint8_t> const &bytes_;
  std::size_t pos_ = 0;
};

bool valid_kind(std::uint8_t k) { return k >= 1 && k <= 6; }
bool valid_dtype(std::uint8_t d) { return d >= 1 && d <= 5; }

template <typename U>
std::vector<std::uint8_t> raw(std::vector<U> const &v)
{
  std::vector<std::uint8_t> p(v.size() * sizeof(U));
  if (!p.empty()) {
    std::memcpy(p.data(), v.data(), p.size());
  }
  return p;
}

template <typename U>
std::vector<U> unraw(Record const &r)
{
  std::vector<U> v(r.payload.size() / sizeof(U));
  if (!v.empty()) {
    std::memcpy(v.data(), r.payload.data(), v.size() * sizeof(U));
  }
  return v;
}

std::vector<cx> complex_values(Record const &r)
{
  if (r.dtype == DType::c128) {
    return unraw<cx>(r);
  }
  if (r.dtype == DType::c64) {
    auto const f = unraw<std::complex<float>>(r);
    return {f.begin(), f.end()};
  }
  throw InvalidInput("record '" + r.name + "' is not complex");
}

std::map<std::string, std::string> query(std::string const &name)
{
  std::map<std::string, std::string> out;
  auto const q = name.find('?');
  if (q == std::string::npos) {
    return out;
  }
  std::stringstream ss(name.substr(q + 1));
  std::string item;
  while (std::getline(ss, item, '&')) {
    auto const eq = item.find('=');
    if (eq != std::string::npos) {
      out[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return out;
}

} // namespace

std::vector<std::uint8_t> encode(std::vector<Record> const &records)
{
  std::vector<std::uint8_t> out(magic, magic + 4);
  put<std::uint16_t>(out, format_version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (auto const &r : records) {
    if (r.name.size() > 0xffff) {
      throw InvalidInput("record name too long");
    }
    if (r.payload.size() != r.elements() * dtype_size(r.dtype)) {
      throw ShapeError("payload of record '" + r.name + "' does not match its dims and dtype");
    }
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.kind));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    for (auto d : r.dims) {
      put<std::uint32_t>(out, d);
    }
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

std::vector<Record> decode(std::vector<std::uint8_t> const &bytes)
{
  Reader in(bytes);
  char m[4];
  in.take(m, 4, "magic");
  if (std::memcmp(m, magic, 4) != 0) {
    throw FormatError("bad magic", 0);
  }
  auto const version = in.get<std::uint16_t>("version");
  if (version != format_version) {
    throw FormatError("unsupported version " + std::to_string(version), 4);
  }
  auto const count = in.get<std::uint32_t>("record count");
  std::vector<Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    std::size_t const at = in.pos();
    auto const kind = in.get<std::uint8_t>("record kind");
    if (!valid_kind(kind)) {
      throw FormatError("unknown record kind " + std::to_string(kind), at);
    }
    r.kind = static_cast<RecordKind>(kind);
    auto const len = in.get<std::uint16_t>("name length");
    r.name.resize(len);
    in.take(r.name.data(), len, "name");
    for (auto &d : r.dims) {
      d = in.get<std::uint32_t>("dims");
    }
    std::size_t const dt_at = in.pos();
    auto const dtype = in.get<std::uint8_t>("dtype");
    if (!valid_dtype(dtype)) {
      throw FormatError("unknown dtype " + std::to_string(dtype), dt_at);
    }
    r.dtype = static_cast<DType>(dtype);
    std::size_t const n = r.elements() * dtype_size(r.dtype);
    if (n > in.remaining()) {
      throw FormatError("truncated container while reading payload", in.pos());
    }
    r.payload.resize(n);
    in.take(r.payload.data(), n, "payload");
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing bytes after last record", in.pos());
  }
  return records;
}

void write(std::string const &path, std::vector<Record> const &records)
{
  auto const bytes = encode(records);
  std::string const tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw InvalidInput("cannot open " + tmp + " for writing");
    }
    f.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
      throw InvalidInput("write failed: " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw InvalidInput("cannot move " + tmp + " to " + path);
  }
}

std::vector<Record> read(std::string const &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw InvalidInput("cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

Record const &find(std::vector<Record> const &records, std::string const &name)
{
  for (auto const &r : records) {
    if (r.name == name || base_name(r.name) == name) {
      return r;
    }
  }
  throw InvalidInput("no record named '" + name + "'");
}

std::string base_name(std::string const &name) { return name.substr(0, name.find('?')); }

Record to_record(ComplexImage const &x, std::string const &name)
{
  Record r;
  r.kind = RecordKind::image;
  r.name = name;
  r.dims = {1, 1, static_cast<std::uint32_t>(x.height), static_cast<std::uint32_t>(x.width)};
  r.dtype = DType::c128;
  r.payload = raw(x.data);
  return r;
}

Record to_record(CoilStack const &k, std::string const &name, RecordKind kind)
{
  Record r;
  r.kind = kind;
  r.name = name;
  r.dims = {1, static_cast<std::uint32_t>(k.coils), static_cast<std::uint32_t>(k.height),
            static_cast<std::uint32_t>(k.width)};
  r.dtype = DType::c128;
  r.payload = raw(k.data);
  return r;
}

Record to_record(SenseMaps const &m, std::string const &name)
{
  Record r;
  r.kind = RecordKind::maps;
  r.name = name;
  r.dims = {1, static_cast<std::uint32_t>(m.coils), static_cast<std::uint32_t>(m.height),
            static_cast<std::uint32_t>(m.width)};
  r.dtype = DType::c128;
  r.payload = raw(m.data);
  return r;
}

Record to_record(SamplingMask const &m, std::string const &name)
{
  char const *kind = m.acs.kind == AcsKind::lines ? "lines" : m.acs.kind == AcsKind::block ? "block" : "none";
  std::ostringstream n;
  n.precision(17);
  n << base_name(name) << "?acs=" << kind << "&count=" << m.acs.count << "&af=" << m.af_nominal << "&seed=" << m.seed;
  Record r;
  r.kind = RecordKind::mask;
  r.name = n.str();
  r.dims = {1, 1, static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)};
  r.dtype = DType::u8;
  r.payload = m.omega;
  return r;
}

Record to_record(std::vector<float> const &v, std::array<std::uint32_t, 4> dims, std::string const &name, RecordKind kind)
{
  Record r{kind, name, dims, DType::f32, raw(v)};
  if (r.elements() != v.size()) {
    throw ShapeError("record dims do not match value count for '" + name + "'");
  }
  return r;
}

Record to_record(
  std::vector<double> const &v, std::array<std::uint32_t, 4> dims, std::string const &name, RecordKind kind)
{
  Record r{kind, name, dims, DType::f64, raw(v)};
  if (r.elements() != v.size()) {
    throw ShapeError("record dims do not match value count for '" + name + "'");
  }
  return r;
}

ComplexImage to_image(Record const &r)
{
  if (r.dims[0] != 1 || r.dims[1] != 1) {
    throw ShapeError("record '" + r.name + "' is not a single image");
  }
  return ComplexImage(static_cast<int>(r.dims[2]), static_cast<int>(r.dims[3]), complex_values(r));
}

CoilStack to_stack(Record const &r)
{
  if (r.dims[0] != 1) {
    throw ShapeError("record '" + r.name + "' holds more than one stack");
  }
  CoilStack s(static_cast<int>(r.dims[1]), static_cast<int>(r.dims[2]), static_cast<int>(r.dims[3]));
  s.data = complex_values(r);
  return s;
}

SenseMaps to_maps(Record const &r)
{
  auto const s = to_stack(r);
  SenseMaps m(s.coils, s.height, s.width);
  m.data = s.data;
  std::size_t const hw = m.plane_size();
  for (std::size_t i = 0; i < hw; ++i) {
    for (int j = 0; j < m.coils; ++j) {
      if (m.data[j * hw + i] != cx{0.0}) {
        m.foreground[i] = 1;
        break;
      }
    }
  }
  return m;
}

SamplingMask to_mask(Record const &r)
{
  if (r.dtype != DType::u8 || r.dims[0] != 1 || r.dims[1] != 1) {
    throw InvalidInput("record '" + r.name + "' is not a mask");
  }
  SamplingMask m;
  m.height = static_cast<int>(r.dims[2]);
  m.width = static_cast<int>(r.dims[3]);
  m.omega = r.payload;
  auto const q = query(r.name);
  try {
    if (auto it = q.find("acs"); it != q.end()) {
      m.acs.kind = it->second == "lines" ? AcsKind::lines : it->second == "block" ? AcsKind::block : AcsKind::none;
    }
    if (auto it = q.find("count"); it != q.end()) {
      m.acs.count = std::stoi(it->second);
    }
    if (auto it = q.find("af"); it != q.end()) {
      m.af_nominal = std::stod(it->second);
    }
    if (auto it = q.find("seed"); it != q.end()) {
      m.seed = std::stoull(it->second);
    }
  } catch (std::logic_error const &) {
    throw InvalidInput("malformed mask descriptor in '" + r.name + "'");
  }
  return m;
}

std::vector<double> to_reals(Record const &r)
{
  if (r.dtype == DType::f64) {
    return unraw<double>(r);
  }
  if (r.dtype == DType::f32) {
    auto const f = unraw<float>(r);
    return {f.begin(), f.end()};
  }
  if (r.dtype == DType::u8) {
    return {r.payload.begin(), r.payload.end()};
  }
  throw InvalidInput("record '" + r.name + "' is not real-valued");
}

} // namespace jdsi::io
