// file_io.cpp - "FRG1" volume files and network checkpoints.

#include "inrreg/file_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>
#include <vector>

#include <openssl/evp.h>

namespace inrreg {

namespace {

constexpr char kVolumeMagic[4] = {'F', 'R', 'G', '1'};
constexpr char kParamsMagic[4] = {'F', 'R', 'P', '1'};

// Little-endian byte sink / source independent of host byte order.
class Writer {
public:
    void bytes(const char *p, std::size_t n){ buf_.insert(buf_.end(), p, p + n); }
    template <class U>
    void uint(U v){
        for(std::size_t i = 0; i < sizeof(U); ++i){
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void f64(double v){ uint(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v){ uint(std::bit_cast<std::uint32_t>(v)); }

    void save(const std::filesystem::path &path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if(!os){
            throw IoError("cannot open '" + path.string() + "' for writing: " + std::strerror(errno));
        }
        os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if(!os){
            throw IoError("write failed for '" + path.string() + "': " + std::strerror(errno));
        }
    }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path &path) : path_(path.string()){
        std::ifstream is(path, std::ios::binary);
        if(!is){
            throw IoError("cannot open '" + path_ + "' for reading: " + std::strerror(errno));
        }
        buf_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    const std::string &path() const { return path_; }

    void need(std::size_t n, const char *tag) const {
        if(remaining() < n){
            throw FormatError(std::string(tag) + ": '" + path_ + "' ends after " + std::to_string(buf_.size())
                              + " bytes");
        }
    }
    const char *take(std::size_t n){
        const char *p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <class U>
    U uint(){
        const auto *p = reinterpret_cast<const unsigned char *>(take(sizeof(U)));
        U v = 0;
        for(std::size_t i = 0; i < sizeof(U); ++i){
            v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
        }
        return v;
    }
    double f64(){ return std::bit_cast<double>(uint<std::uint64_t>()); }
    float f32(){ return std::bit_cast<float>(uint<std::uint32_t>()); }

private:
    std::string path_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

void write_header(Writer &w, VolumeKind kind, const GridSpec &g){
    w.bytes(kVolumeMagic, 4);
    w.uint(static_cast<std::uint8_t>(kind));
    for(int a = 0; a < 3; ++a){
        w.uint(static_cast<std::uint32_t>(g.dims[a]));
    }
    for(int a = 0; a < 3; ++a){
        w.f64(g.spacing[a]);
    }
    for(int a = 0; a < 3; ++a){
        w.f64(g.origin[a]);
    }
}

VolumeFileHeader parse_header(Reader &r){
    r.need(4, "truncated header");
    if(std::memcmp(r.take(4), kVolumeMagic, 4) != 0){
        throw FormatError("bad magic: '" + r.path() + "' is not an FRG1 volume");
    }
    r.need(kVolumeHeaderBytes - 4, "truncated header");
    VolumeFileHeader h;
    const auto kind = r.uint<std::uint8_t>();
    if(kind > 2){
        throw FormatError("unknown kind " + std::to_string(kind) + " in '" + r.path() + "'");
    }
    h.kind = static_cast<VolumeKind>(kind);
    for(int a = 0; a < 3; ++a){
        h.grid.dims[a] = static_cast<int>(r.uint<std::uint32_t>());
    }
    for(int a = 0; a < 3; ++a){
        h.grid.spacing[a] = r.f64();
    }
    for(int a = 0; a < 3; ++a){
        h.grid.origin[a] = r.f64();
    }
    try{
        h.grid.validate();
    }catch(const std::invalid_argument &e){
        throw FormatError("invalid grid in '" + r.path() + "': " + e.what());
    }
    return h;
}

void check_payload(const Reader &r, std::size_t expected){
    if(r.remaining() < expected){
        throw FormatError("truncated payload: '" + r.path() + "' holds " + std::to_string(r.remaining())
                          + " payload bytes, dims need " + std::to_string(expected));
    }
    if(r.remaining() > expected){
        throw FormatError("payload length mismatch: '" + r.path() + "' holds " + std::to_string(r.remaining())
                          + " payload bytes, dims need " + std::to_string(expected));
    }
}

const char *kind_name(VolumeKind k){
    switch(k){
        case VolumeKind::scalar: return "scalar volume";
        case VolumeKind::vector: return "vector field";
        case VolumeKind::label: return "label mask";
    }
    return "?";
}

} // namespace

void write_volume(const std::filesystem::path &path, const Volume3 &vol){
    Writer w;
    write_header(w, VolumeKind::scalar, vol.grid);
    for(const double v : vol.data){
        w.f32(static_cast<float>(v));
    }
    w.save(path);
}

void write_volume(const std::filesystem::path &path, const VectorField3 &field){
    Writer w;
    write_header(w, VolumeKind::vector, field.grid);
    for(const auto &v : field.data){
        for(int a = 0; a < 3; ++a){
            w.f32(static_cast<float>(v[a]));
        }
    }
    w.save(path);
}

void write_volume(const std::filesystem::path &path, const LabelMask &mask){
    Writer w;
    write_header(w, VolumeKind::label, mask.grid);
    for(const auto v : mask.data){
        w.uint(v);
    }
    w.save(path);
}

VolumeFileHeader read_volume_header(const std::filesystem::path &path){
    Reader r(path);
    return parse_header(r);
}

AnyVolume read_volume(const std::filesystem::path &path){
    Reader r(path);
    const auto h = parse_header(r);
    const std::size_t n = h.grid.node_count();
    switch(h.kind){
        case VolumeKind::scalar: {
            check_payload(r, n * 4);
            Volume3 v(h.grid);
            for(auto &x : v.data){
                x = r.f32();
            }
            return v;
        }
        case VolumeKind::vector: {
            check_payload(r, n * 12);
            VectorField3 f(h.grid);
            for(auto &x : f.data){
                for(int a = 0; a < 3; ++a){
                    x[a] = r.f32();
                }
            }
            return f;
        }
        case VolumeKind::label: {
            check_payload(r, n * 2);
            LabelMask m(h.grid);
            for(auto &x : m.data){
                x = r.uint<std::uint16_t>();
            }
            return m;
        }
    }
    throw FormatError("unknown kind in '" + path.string() + "'");
}

namespace {

template <class T>
T read_typed(const std::filesystem::path &path, VolumeKind expected){
    auto any = read_volume(path);
    if(auto *v = std::get_if<T>(&any)){
        return std::move(*v);
    }
    const auto got = static_cast<VolumeKind>(any.index());
    throw FormatError("wrong kind: '" + path.string() + "' holds a " + kind_name(got) + ", expected a "
                      + kind_name(expected));
}

} // namespace

Volume3 read_scalar_volume(const std::filesystem::path &path){
    return read_typed<Volume3>(path, VolumeKind::scalar);
}

VectorField3 read_vector_field(const std::filesystem::path &path){
    return read_typed<VectorField3>(path, VolumeKind::vector);
}

LabelMask read_label_mask(const std::filesystem::path &path){
    return read_typed<LabelMask>(path, VolumeKind::label);
}

void write_params(const std::filesystem::path &path, const MLPParams &params){
    params.validate();
    Writer w;
    w.bytes(kParamsMagic, 4);
    w.uint(static_cast<std::uint32_t>(params.config.hidden_width));
    w.uint(static_cast<std::uint8_t>(params.config.activation));
    w.f64(params.config.sine_frequency);
    w.uint(params.config.seed);
    w.uint(static_cast<std::uint64_t>(params.values.size()));
    for(Eigen::Index i = 0; i < params.values.size(); ++i){
        w.f64(params.values[i]);
    }
    w.save(path);
}

MLPParams read_params(const std::filesystem::path &path){
    Reader r(path);
    r.need(4, "truncated header");
    if(std::memcmp(r.take(4), kParamsMagic, 4) != 0){
        throw FormatError("bad magic: '" + path.string() + "' is not an FRP1 checkpoint");
    }
    r.need(29, "truncated header");
    MLPParams p;
    p.config.hidden_width = static_cast<int>(r.uint<std::uint32_t>());
    const auto act = r.uint<std::uint8_t>();
    if(act > 1){
        throw FormatError("unknown kind: activation code " + std::to_string(act) + " in '" + path.string() + "'");
    }
    p.config.activation = static_cast<Activation>(act);
    p.config.sine_frequency = r.f64();
    p.config.seed = r.uint<std::uint64_t>();
    const auto count = r.uint<std::uint64_t>();
    if(count != MLPParams::count_for(p.config.hidden_width)){
        throw FormatError("payload length mismatch: parameter count " + std::to_string(count)
                          + " does not fit hidden_width " + std::to_string(p.config.hidden_width));
    }
    check_payload(r, count * 8);
    p.values.resize(static_cast<Eigen::Index>(count));
    for(Eigen::Index i = 0; i < p.values.size(); ++i){
        p.values[i] = r.f64();
    }
    p.validate();
    return p;
}

std::string file_sha256(const std::filesystem::path &path){
    std::ifstream is(path, std::ios::binary);
    if(!is){
        throw IoError("cannot open '" + path.string() + "' for hashing: " + std::strerror(errno));
    }
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while(is){
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if(is.gcount() > 0){
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
        }
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for(unsigned int i = 0; i < len; ++i){
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return os.str();
}

} // namespace inrreg
