#include "lightde/metadata.hpp"

#include <algorithm>
#include <cstring>

#include "lightde/analysis.hpp"

namespace lightde::meta {

std::string StaticPointerRecord::to_text() const {
  switch (kind) {
    case Kind::HeapField:
      return "heap{c=" + std::to_string(a) +
             ",off=" + (b == kAnyPointerField ? std::string("*") : std::to_string(b)) + "}";
    case Kind::Global:
      return "global{" + std::to_string(a) + "}";
    case Kind::Stack:
      return "stack{fn=" + std::to_string(a) + ",slot=" + std::to_string(b) + "}";
  }
  return "?";
}

std::optional<std::uint32_t> GlobalIndexMap::find(std::uint32_t global_index,
                                                  std::uint32_t offset) const {
  for (std::uint32_t i = 0; i < cells.size(); ++i)
    if (cells[i].global_index == global_index && cells[i].offset == offset) return i;
  return std::nullopt;
}

GlobalIndexMap assign_global_indices(const ir::Module& m) {
  GlobalIndexMap map;
  for (std::uint32_t g = 0; g < m.globals.size(); ++g) {
    const ir::TypeDef& t = m.type(m.globals[g].type);
    for (std::uint32_t off : t.pointer_offsets)
      map.cells.push_back(GlobalCell{m.globals[g].name, g, off});
  }
  std::sort(map.cells.begin(), map.cells.end(), [](const GlobalCell& a, const GlobalCell& b) {
    if (a.global != b.global) return a.global < b.global;
    return a.offset < b.offset;
  });
  return map;
}

namespace {
std::uint32_t align8(std::uint32_t v) { return (v + 7u) & ~7u; }
}  // namespace

std::optional<std::uint32_t> FrameLayout::slot_of(std::uint32_t instr,
                                                  std::uint32_t cell_offset) const {
  if (instr >= alloca_base.size() || alloca_base[instr] == 0xffffffffu) return std::nullopt;
  std::uint32_t want = alloca_base[instr] + cell_offset;
  for (std::uint32_t s = 0; s < slot_offsets.size(); ++s)
    if (slot_offsets[s] == want) return s;
  return std::nullopt;
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> FrameLayout::alloca_at(
    std::uint32_t frame_off) const {
  for (std::uint32_t i = 0; i < alloca_base.size(); ++i) {
    if (alloca_base[i] == 0xffffffffu) continue;
    if (frame_off >= alloca_base[i] && frame_off < alloca_base[i] + alloca_size[i])
      return std::make_pair(i, frame_off - alloca_base[i]);
  }
  return std::nullopt;
}

FrameLayouts build_frame_layouts(const ir::Module& m) {
  FrameLayouts out;
  out.per_function.resize(m.functions.size());
  for (std::uint32_t f = 0; f < m.functions.size(); ++f) {
    const ir::Function& fn = m.functions[f];
    FrameLayout& fl = out.per_function[f];
    fl.alloca_base.assign(fn.body.size(), 0xffffffffu);
    fl.alloca_size.assign(fn.body.size(), 0);
    std::uint32_t cur = 0;
    for (std::uint32_t i = 0; i < fn.body.size(); ++i) {
      const ir::Instruction& ins = fn.body[i];
      if (ins.op != ir::Opcode::Alloca) continue;
      std::uint32_t base = cur;
      fl.alloca_base[i] = base;
      fl.alloca_size[i] = static_cast<std::uint32_t>(ins.size);
      cur = align8(base + static_cast<std::uint32_t>(ins.size));
      for (std::uint32_t po : m.type(ins.type).pointer_offsets)
        fl.slot_offsets.push_back(base + po);
    }
    fl.frame_size = cur;
  }
  return out;
}

ObjectPointerTable build_tables(const pta::PointsToState& state, const pta::Classification& cls,
                                const ir::Module& m, const pta::ObjectTable& objs,
                                const GlobalIndexMap& gmap, const FrameLayouts& frames,
                                bool stack_hooks) {
  ObjectPointerTable table;
  table.module_hash = ir::module_hash(m);
  table.stack_hooks = stack_hooks;
  table.globals = gmap;

  for (std::uint32_t f = 0; f < m.functions.size(); ++f) {
    FunctionInfo info;
    info.name = m.functions[f].name;
    info.frame_size = frames.per_function[f].frame_size;
    info.slot_offsets = frames.per_function[f].slot_offsets;
    table.functions.push_back(std::move(info));
  }

  table.objects.resize(objs.heap_count());
  for (std::uint32_t ord = 1; ord <= objs.heap_count(); ++ord) {
    ObjectEntry& e = table.objects[ord - 1];
    e.static_id = ord;
    std::uint32_t obj = objs.heap_object(ord);
    const auto& types = state.type_set(obj);
    e.has_layout = !types.empty();
    for (ir::TypeId t : types) {
      const auto& ptrs = m.type(t).pointer_offsets;
      e.pointer_field_offsets.insert(e.pointer_field_offsets.end(), ptrs.begin(), ptrs.end());
    }
    std::sort(e.pointer_field_offsets.begin(), e.pointer_field_offsets.end());
    e.pointer_field_offsets.erase(
        std::unique(e.pointer_field_offsets.begin(), e.pointer_field_offsets.end()),
        e.pointer_field_offsets.end());
  }

  auto spread = [&](const std::vector<pta::ClassifiedLocation>& locs) {
    for (const pta::ClassifiedLocation& loc : locs)
      for (std::uint32_t ord : loc.heap_targets)
        table.objects[ord - 1].records.push_back(loc.record);
  };
  spread(cls.heap_resident);
  spread(cls.global_cells);
  if (stack_hooks) spread(cls.stack_slots);

  for (ObjectEntry& e : table.objects) {
    std::sort(e.records.begin(), e.records.end());
    e.records.erase(std::unique(e.records.begin(), e.records.end()), e.records.end());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'D', 'E', 'M'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<std::uint8_t> out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

struct Reader {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > in.size()) throw MetadataError("metadata truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
  }
  std::uint32_t count(std::size_t elem_min) {
    std::uint32_t n = u32();
    if (static_cast<std::size_t>(n) * elem_min > in.size() - pos)
      throw MetadataError("metadata truncated");
    return n;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_tables(const ObjectPointerTable& t) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(kVersion);
  w.u64(t.module_hash);
  w.u8(t.stack_hooks ? 1 : 0);

  w.u32(static_cast<std::uint32_t>(t.functions.size()));
  for (const FunctionInfo& f : t.functions) {
    w.str(f.name);
    w.u32(f.frame_size);
    w.u32(static_cast<std::uint32_t>(f.slot_offsets.size()));
    for (std::uint32_t s : f.slot_offsets) w.u32(s);
  }
  w.u32(static_cast<std::uint32_t>(t.globals.cells.size()));
  for (const GlobalCell& c : t.globals.cells) {
    w.str(c.global);
    w.u32(c.global_index);
    w.u32(c.offset);
  }
  w.u32(static_cast<std::uint32_t>(t.objects.size()));
  for (const ObjectEntry& e : t.objects) {
    w.u32(e.static_id);
    w.u8(e.has_layout ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(e.pointer_field_offsets.size()));
    for (std::uint32_t o : e.pointer_field_offsets) w.u32(o);
    w.u32(static_cast<std::uint32_t>(e.records.size()));
    for (const StaticPointerRecord& r : e.records) {
      w.u8(static_cast<std::uint8_t>(r.kind));
      w.u32(r.a);
      w.u32(r.b);
    }
  }
  return w.out;
}

ObjectPointerTable deserialize_tables(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw MetadataError("bad metadata magic");
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw MetadataError("unsupported metadata version " + std::to_string(version));

  ObjectPointerTable t;
  t.module_hash = r.u64();
  t.stack_hooks = r.u8() != 0;

  std::uint32_t nf = r.count(9);
  for (std::uint32_t i = 0; i < nf; ++i) {
    FunctionInfo f;
    f.name = r.str();
    f.frame_size = r.u32();
    std::uint32_t ns = r.count(4);
    for (std::uint32_t s = 0; s < ns; ++s) f.slot_offsets.push_back(r.u32());
    t.functions.push_back(std::move(f));
  }
  std::uint32_t nc = r.count(12);
  for (std::uint32_t i = 0; i < nc; ++i) {
    GlobalCell c;
    c.global = r.str();
    c.global_index = r.u32();
    c.offset = r.u32();
    t.globals.cells.push_back(std::move(c));
  }
  std::uint32_t no = r.count(13);
  for (std::uint32_t i = 0; i < no; ++i) {
    ObjectEntry e;
    e.static_id = r.u32();
    e.has_layout = r.u8() != 0;
    std::uint32_t noff = r.count(4);
    for (std::uint32_t k = 0; k < noff; ++k) e.pointer_field_offsets.push_back(r.u32());
    std::uint32_t nr = r.count(9);
    for (std::uint32_t k = 0; k < nr; ++k) {
      StaticPointerRecord rec;
      std::uint8_t kind = r.u8();
      if (kind > 2) throw MetadataError("bad record kind");
      rec.kind = static_cast<StaticPointerRecord::Kind>(kind);
      rec.a = r.u32();
      rec.b = r.u32();
      e.records.push_back(rec);
    }
    t.objects.push_back(std::move(e));
  }
  if (r.pos != bytes.size()) throw MetadataError("trailing bytes in metadata");
  return t;
}

}  // namespace lightde::meta
