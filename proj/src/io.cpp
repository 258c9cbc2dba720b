#include "lrsgs/io.hpp"

#include <json.hpp>
#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace lrsgs {

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    return in;
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const fs::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error(ErrorCode::Format, "truncated file " + path.string());
    return v;
}

const std::map<std::string, PlyType>& ply_type_names() {
    static const std::map<std::string, PlyType> names = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64},
    };
    return names;
}

const char* ply_type_name(PlyType t) {
    switch (t) {
    case PlyType::Int8: return "int8";
    case PlyType::UInt8: return "uint8";
    case PlyType::Int16: return "int16";
    case PlyType::UInt16: return "uint16";
    case PlyType::Int32: return "int32";
    case PlyType::UInt32: return "uint32";
    case PlyType::Float32: return "float32";
    case PlyType::Float64: return "float64";
    }
    return "float32";
}

void write_value(std::ostream& out, PlyType t, double v) {
    switch (t) {
    case PlyType::Int8: put(out, static_cast<std::int8_t>(v)); break;
    case PlyType::UInt8: put(out, static_cast<std::uint8_t>(v)); break;
    case PlyType::Int16: put(out, static_cast<std::int16_t>(v)); break;
    case PlyType::UInt16: put(out, static_cast<std::uint16_t>(v)); break;
    case PlyType::Int32: put(out, static_cast<std::int32_t>(v)); break;
    case PlyType::UInt32: put(out, static_cast<std::uint32_t>(v)); break;
    case PlyType::Float32: put(out, static_cast<float>(v)); break;
    case PlyType::Float64: put(out, v); break;
    }
}

double read_value(std::istream& in, PlyType t, const fs::path& path) {
    switch (t) {
    case PlyType::Int8: return get<std::int8_t>(in, path);
    case PlyType::UInt8: return get<std::uint8_t>(in, path);
    case PlyType::Int16: return get<std::int16_t>(in, path);
    case PlyType::UInt16: return get<std::uint16_t>(in, path);
    case PlyType::Int32: return get<std::int32_t>(in, path);
    case PlyType::UInt32: return get<std::uint32_t>(in, path);
    case PlyType::Float32: return get<float>(in, path);
    case PlyType::Float64: return get<double>(in, path);
    }
    return 0.0;
}

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* file = nullptr;

    explicit PngWriter(const fs::path& path) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        file = std::fopen(path.c_str(), "wb");
        if (!file) throw Error(ErrorCode::Io, "cannot write " + path.string());
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!info) throw Error(ErrorCode::Io, "libpng initialization failed");
        png_init_io(png, file);
    }
    ~PngWriter() {
        png_destroy_write_struct(&png, &info);
        if (file) std::fclose(file);
    }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    void write(int width, int height, int bit_depth, int color_type, std::vector<std::vector<png_byte>>& rows,
               const fs::path& path) {
        if (setjmp(png_jmpbuf(png))) throw Error(ErrorCode::Io, "libpng failed writing " + path.string());
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (auto& r : rows) png_write_row(png, r.data());
        png_write_end(png, nullptr);
    }
};

std::vector<std::uint8_t> read_png_raw(const fs::path& path, png_uint_32 format, int& width, int& height) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw Error(fs::exists(path) ? ErrorCode::Format : ErrorCode::Io,
                    "cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = format;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error(ErrorCode::Format, "cannot decode PNG " + path.string() + ": " + img.message);
    }
    width = static_cast<int>(img.width);
    height = static_cast<int>(img.height);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

const PlyColumn* PlyTable::find(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

const std::vector<double>& PlyTable::column(const std::string& name) const {
    const PlyColumn* c = find(name);
    if (!c) throw Error(ErrorCode::Format, "PLY lacks property '" + name + "'");
    return c->values;
}

void write_ply(const fs::path& path, const PlyTable& table) {
    const std::size_t n = table.rows();
    for (const auto& c : table.columns) {
        if (c.values.size() != n) throw Error(ErrorCode::DimensionMismatch, "PLY columns differ in length");
    }
    std::ofstream out = open_out(path);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
    for (const auto& c : table.columns) out << "property " << ply_type_name(c.type) << " " << c.name << "\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& c : table.columns) write_value(out, c.type, c.values[i]);
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

PlyTable read_ply(const fs::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "ply") throw Error(ErrorCode::Format, path.string() + " is not a PLY file");
    bool binary = true;
    std::size_t vertices = 0;
    bool in_vertex = false, seen_vertex = false;
    PlyTable table;
    while (std::getline(in, line)) {
        std::istringstream ss(trim(line));
        std::string word;
        ss >> word;
        if (word == "end_header") break;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt != "binary_little_endian") throw Error(ErrorCode::Format, "unsupported PLY format " + fmt);
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            ss >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex) {
                vertices = count;
                seen_vertex = true;
            } else if (!seen_vertex) {
                throw Error(ErrorCode::Format, "PLY element '" + name + "' precedes the vertex element");
            }
        } else if (word == "property") {
            std::string type, name;
            ss >> type >> name;
            if (!in_vertex) continue;
            if (type == "list") throw Error(ErrorCode::Format, "list properties are not supported");
            const auto it = ply_type_names().find(type);
            if (it == ply_type_names().end()) throw Error(ErrorCode::Format, "unknown PLY type " + type);
            table.columns.push_back({name, it->second, {}});
        } else {
            throw Error(ErrorCode::Format, "unexpected PLY header line: " + line);
        }
    }
    if (!seen_vertex) throw Error(ErrorCode::Format, path.string() + " has no vertex element");
    for (auto& c : table.columns) c.values.resize(vertices);
    for (std::size_t i = 0; i < vertices; ++i) {
        for (auto& c : table.columns) {
            if (binary) {
                c.values[i] = read_value(in, c.type, path);
            } else if (!(in >> c.values[i])) {
                throw Error(ErrorCode::Format, "truncated ASCII PLY " + path.string());
            }
        }
    }
    return table;
}

void write_sweep_ply(const fs::path& path, std::span<const LidarPoint> points) {
    PlyTable t;
    t.columns = {{"x", PlyType::Float32, {}},         {"y", PlyType::Float32, {}},
                 {"z", PlyType::Float32, {}},         {"intensity", PlyType::Float32, {}},
                 {"ring", PlyType::UInt16, {}},       {"azimuth_index", PlyType::UInt32, {}},
                 {"timestamp", PlyType::Float64, {}}};
    for (const auto& p : points) {
        t.columns[0].values.push_back(p.position.x());
        t.columns[1].values.push_back(p.position.y());
        t.columns[2].values.push_back(p.position.z());
        t.columns[3].values.push_back(p.intensity);
        t.columns[4].values.push_back(p.ring);
        t.columns[5].values.push_back(p.azimuth_index);
        t.columns[6].values.push_back(p.timestamp);
    }
    write_ply(path, t);
}

std::vector<LidarPoint> read_sweep_ply(const fs::path& path) {
    const PlyTable t = read_ply(path);
    const auto& x = t.column("x");
    const auto& y = t.column("y");
    const auto& z = t.column("z");
    const auto& intensity = t.column("intensity");
    const auto& ring = t.column("ring");
    const auto& az = t.column("azimuth_index");
    const PlyColumn* ts = t.find("timestamp");
    std::vector<LidarPoint> out(t.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].position = Vec3(x[i], y[i], z[i]);
        out[i].intensity = intensity[i];
        out[i].ring = static_cast<int>(ring[i]);
        out[i].azimuth_index = static_cast<int>(az[i]);
        out[i].timestamp = ts ? ts->values[i] : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

void write_png(const fs::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw Error(ErrorCode::DimensionMismatch, "PNG output needs 1 or 3 channels");
    }
    const int c = image.channels();
    std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(image.height()),
                                            std::vector<png_byte>(static_cast<std::size_t>(image.width()) * c));
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int k = 0; k < c; ++k) {
                const double v = std::clamp(image(x, y, k), 0.0, 1.0);
                rows[y][static_cast<std::size_t>(x) * c + k] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
    }
    PngWriter w(path);
    w.write(image.width(), image.height(), 8, c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows, path);
}

Image read_png(const fs::path& path) {
    png_image probe;
    std::memset(&probe, 0, sizeof(probe));
    probe.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&probe, path.c_str())) {
        throw Error(fs::exists(path) ? ErrorCode::Format : ErrorCode::Io, "cannot read PNG " + path.string());
    }
    const bool color = (probe.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png_image_free(&probe);
    int w = 0, h = 0;
    const auto buf = read_png_raw(path, color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY, w, h);
    const int c = color ? 3 : 1;
    Image img(w, h, c);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = buf[i] / 255.0;
    return img;
}

void write_mask_png(const fs::path& path, int width, int height, std::span<const std::uint8_t> mask) {
    if (mask.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::DimensionMismatch, "mask size does not match its dimensions");
    }
    std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(height),
                                            std::vector<png_byte>(static_cast<std::size_t>((width + 7) / 8), 0));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (mask[static_cast<std::size_t>(y) * width + x]) rows[y][x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
        }
    }
    PngWriter w(path);
    w.write(width, height, 1, PNG_COLOR_TYPE_GRAY, rows, path);
}

std::vector<std::uint8_t> read_mask_png(const fs::path& path, int& width, int& height) {
    auto buf = read_png_raw(path, PNG_FORMAT_GRAY, width, height);
    for (auto& v : buf) v = v >= 128 ? 1 : 0;
    return buf;
}

void write_pfm(const fs::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw Error(ErrorCode::DimensionMismatch, "PFM output needs 1 or 3 channels");
    }
    std::ofstream out = open_out(path);
    out << (image.channels() == 3 ? "PF" : "Pf") << "\n" << image.width() << " " << image.height() << "\n-1.0\n";
    for (int y = image.height() - 1; y >= 0; --y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) put(out, static_cast<float>(image(x, y, c)));
        }
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

Image read_pfm(const fs::path& path) {
    std::ifstream in = open_in(path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0) {
        throw Error(ErrorCode::Format, path.string() + " is not a PFM file");
    }
    if (scale > 0.0) throw Error(ErrorCode::Format, "big-endian PFM is not supported");
    const int c = magic == "PF" ? 3 : 1;
    Image img(w, h, c);
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) img(x, y, k) = get<float>(in, path);
        }
    }
    return img;
}

fs::path mask_path_for(const fs::path& pfm) {
    fs::path p = pfm;
    p.replace_extension(".mask.png");
    return p;
}

void write_sparse(const fs::path& pfm, const SparseImage& image) {
    Image values(image.width, image.height);
    for (std::size_t i = 0; i < image.values.size(); ++i) values.data()[i] = image.valid[i] ? image.values[i] : 0.0;
    write_pfm(pfm, values);
    write_mask_png(mask_path_for(pfm), image.width, image.height, image.valid);
}

SparseImage read_sparse(const fs::path& pfm) {
    const Image values = read_pfm(pfm);
    int w = 0, h = 0;
    const auto mask = read_mask_png(mask_path_for(pfm), w, h);
    if (w != values.width() || h != values.height()) {
        throw Error(ErrorCode::DimensionMismatch, "mask and values differ in size for " + pfm.string());
    }
    SparseImage out(w, h);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            out.values[i] = values.data()[i];
            out.valid[i] = 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

void write_camera(const fs::path& path, const CameraModel& camera) {
    std::ostringstream s;
    s.precision(17);
    s << "[intrinsics]\n"
      << "fx = " << camera.intrinsics.fx << "\nfy = " << camera.intrinsics.fy << "\ncx = " << camera.intrinsics.cx
      << "\ncy = " << camera.intrinsics.cy << "\n\n[extrinsics]\n";
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) s << camera.extrinsics.rotation(r, c) << " ";
        s << camera.extrinsics.translation[r] << "\n";
    }
    s << "\n[size]\nwidth = " << camera.width << "\nheight = " << camera.height << "\n";
    write_text(path, s.str());
}

CameraModel read_camera(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line, section;
    std::map<std::string, double> keys;
    std::vector<double> extr;
    while (std::getline(in, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[') {
            section = line;
            continue;
        }
        if (section == "[extrinsics]") {
            std::istringstream ss(line);
            double v;
            while (ss >> v) extr.push_back(v);
            if (!ss.eof()) throw Error(ErrorCode::Format, "bad extrinsics row in " + path.string());
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || (section != "[intrinsics]" && section != "[size]")) {
            throw Error(ErrorCode::Format, "unexpected line in " + path.string() + ": " + line);
        }
        try {
            keys[trim(line.substr(0, eq))] = std::stod(trim(line.substr(eq + 1)));
        } catch (const std::exception&) {
            throw Error(ErrorCode::Format, "bad number in " + path.string() + ": " + line);
        }
    }
    for (const char* k : {"fx", "fy", "cx", "cy", "width", "height"}) {
        if (!keys.count(k)) throw Error(ErrorCode::Format, path.string() + " lacks '" + k + "'");
    }
    if (extr.size() != 12) throw Error(ErrorCode::Format, path.string() + " needs a 3x4 extrinsic matrix");
    CameraModel cam;
    cam.intrinsics = {keys["fx"], keys["fy"], keys["cx"], keys["cy"]};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.extrinsics.rotation(r, c) = extr[static_cast<std::size_t>(r * 4 + c)];
        cam.extrinsics.translation[r] = extr[static_cast<std::size_t>(r * 4 + 3)];
    }
    cam.width = static_cast<int>(keys["width"]);
    cam.height = static_cast<int>(keys["height"]);
    try {
        cam.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Format, path.string() + ": " + e.what());
    }
    return cam;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'R', 'S', 'G', 'S', 'C', 'K', '1'};

void write_floats(std::ostream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void write_node(std::ostream& out, const std::vector<GaussianPrimitive>& gs, int coeffs) {
    std::vector<float> f;
    for (const auto& g : gs) for (int i = 0; i < 3; ++i) f.push_back(static_cast<float>(g.mean[i]));
    for (const auto& g : gs) for (int i = 0; i < 4; ++i) f.push_back(static_cast<float>(g.rotation[i]));
    for (const auto& g : gs) for (int i = 0; i < 3; ++i) f.push_back(static_cast<float>(g.log_scales[i]));
    for (const auto& g : gs) f.push_back(static_cast<float>(g.opacity_logit));
    for (const auto& g : gs) f.push_back(static_cast<float>(g.reflectance_logit));
    for (const auto& g : gs)
        for (int k = 0; k < coeffs; ++k)
            for (int c = 0; c < 3; ++c) f.push_back(static_cast<float>(g.sh[k][c]));
    write_floats(out, f);
    for (const auto& g : gs) put(out, static_cast<std::uint8_t>(g.kind));
    for (const auto& g : gs) put(out, g.transform_counter);
    for (const auto& g : gs) put(out, g.id);
}

std::vector<GaussianPrimitive> read_node(std::istream& in, std::size_t n, int coeffs, const fs::path& path) {
    std::vector<GaussianPrimitive> gs(n);
    auto f = [&] { return static_cast<double>(get<float>(in, path)); };
    for (auto& g : gs) for (int i = 0; i < 3; ++i) g.mean[i] = f();
    for (auto& g : gs) for (int i = 0; i < 4; ++i) g.rotation[i] = f();
    for (auto& g : gs) for (int i = 0; i < 3; ++i) g.log_scales[i] = f();
    for (auto& g : gs) g.opacity_logit = f();
    for (auto& g : gs) g.reflectance_logit = f();
    for (auto& g : gs)
        for (int k = 0; k < coeffs; ++k)
            for (int c = 0; c < 3; ++c) g.sh[k][c] = f();
    for (auto& g : gs) {
        const auto kind = get<std::uint8_t>(in, path);
        if (kind > 2) throw Error(ErrorCode::Format, "bad salience tag in " + path.string());
        g.kind = static_cast<SalienceKind>(kind);
    }
    for (auto& g : gs) g.transform_counter = get<std::int8_t>(in, path);
    for (auto& g : gs) g.id = get<std::uint64_t>(in, path);
    return gs;
}

} // namespace

void save_checkpoint(const fs::path& path, const SceneGraph& scene) {
    nlohmann::json h;
    h["format"] = "lrsgs-checkpoint";
    h["version"] = 1;
    h["sh_degree"] = scene.sh_degree;
    h["frame_count"] = scene.frame_count;
    h["next_id"] = scene.next_id;
    h["sky"] = {{"rows", scene.sky.rows}, {"cols", scene.sky.cols}};
    h["field_order"] = {"mean",     "quaternion", "log_scales",       "opacity_logit", "reflectance_logit",
                        "sh",       "salience",   "transform_counter", "id"};
    h["background"] = {{"count", scene.background.size()}};
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : scene.objects) {
        nlohmann::json poses = nlohmann::json::array();
        for (const auto& p : o.poses) {
            poses.push_back({p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3], p.translation[0],
                             p.translation[1], p.translation[2]});
        }
        objs.push_back({{"count", o.gaussians.size()}, {"bbox", {o.bbox[0], o.bbox[1], o.bbox[2]}}, {"poses", poses}});
    }
    h["objects"] = objs;
    const std::string header = h.dump();

    std::ofstream out = open_out(path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const int coeffs = sh_coeff_count(scene.sh_degree);
    write_node(out, scene.background, coeffs);
    for (const auto& o : scene.objects) write_node(out, o.gaussians, coeffs);
    std::vector<float> sky;
    for (const auto& t : scene.sky.texels) for (int c = 0; c < 3; ++c) sky.push_back(static_cast<float>(t[c]));
    write_floats(out, sky);
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

SceneGraph load_checkpoint(const fs::path& path) {
    std::ifstream in = open_in(path);
    char magic[sizeof(kCheckpointMagic)] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw Error(ErrorCode::Format, path.string() + " is not a scene checkpoint");
    }
    const auto len = get<std::uint64_t>(in, path);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    SceneGraph scene;
    try {
        const auto h = nlohmann::json::parse(text);
        scene.sh_degree = h.at("sh_degree");
        scene.frame_count = h.at("frame_count");
        scene.next_id = h.at("next_id");
        const int coeffs = sh_coeff_count(scene.sh_degree);
        scene.background = read_node(in, h.at("background").at("count"), coeffs, path);
        for (const auto& o : h.at("objects")) {
            RigidObject obj;
            const auto& b = o.at("bbox");
            obj.bbox = Vec3(b[0], b[1], b[2]);
            for (const auto& p : o.at("poses")) {
                obj.poses.push_back({Vec4(p[0], p[1], p[2], p[3]), Vec3(p[4], p[5], p[6])});
            }
            obj.gaussians = read_node(in, o.at("count"), coeffs, path);
            scene.objects.push_back(std::move(obj));
        }
        scene.sky = SkyModel(h.at("sky").at("rows"), h.at("sky").at("cols"), Vec3::Zero());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, "bad checkpoint header in " + path.string() + ": " + e.what());
    }
    for (auto& t : scene.sky.texels) {
        for (int c = 0; c < 3; ++c) t[c] = get<float>(in, path);
    }
    scene.validate();
    return scene;
}

std::string read_text(const fs::path& path) {
    std::ifstream in = open_in(path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out = open_out(path);
    out << text;
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

} // namespace lrsgs
