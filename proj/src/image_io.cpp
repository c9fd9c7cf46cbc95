#include "artgan/image_io.hpp"

#include "artgan/errors.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <memory>

namespace artgan {

std::string_view format_name(ImageFormat format) noexcept
{
    return format == ImageFormat::png ? "png" : "jpeg";
}

std::optional<ImageFormat> format_from_extension(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        return ImageFormat::png;
    }
    if (ext == ".jpg" || ext == ".jpeg") {
        return ImageFormat::jpeg;
    }
    return std::nullopt;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    return f;
}

// ---- PNG (libpng simplified API) ----

struct PngImage {
    png_image img{};
    PngImage()
    {
        img.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img); }
};

std::size_t png_channels(png_uint_32 format)
{
    return ((format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1) + ((format & PNG_FORMAT_FLAG_ALPHA) ? 1 : 0);
}

ImageInfo probe_png(const std::filesystem::path& path)
{
    PngImage png;
    if (!png_image_begin_read_from_file(&png.img, path.c_str())) {
        throw FormatError("unreadable PNG " + path.string() + ": " + png.img.message);
    }
    return {png.img.width, png.img.height, png_channels(png.img.format), ImageFormat::png};
}

Image read_png(const std::filesystem::path& path)
{
    PngImage png;
    if (!png_image_begin_read_from_file(&png.img, path.c_str())) {
        throw FormatError("unreadable PNG " + path.string() + ": " + png.img.message);
    }
    const std::size_t channels = png_channels(png.img.format);
    png.img.format = (channels >= 3 ? PNG_FORMAT_FLAG_COLOR : 0) | (channels % 2 == 0 ? PNG_FORMAT_FLAG_ALPHA : 0);
    Image out{png.img.width, png.img.height, channels, {}};
    out.pixels.resize(PNG_IMAGE_SIZE(png.img));
    if (!png_image_finish_read(&png.img, nullptr, out.pixels.data(), 0, nullptr)) {
        throw FormatError("corrupt PNG " + path.string() + ": " + png.img.message);
    }
    return out;
}

// ---- JPEG (libjpeg with longjmp error recovery) ----

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

template <bool Decode>
auto jpeg_read(const std::filesystem::path& path)
{
    FilePtr file = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silence;

    // Declared before setjmp so nothing with a destructor is skipped by longjmp.
    ImageInfo info{};
    Image image{};
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError("unreadable JPEG " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    info = {cinfo.image_width, cinfo.image_height, static_cast<std::size_t>(cinfo.num_components),
            ImageFormat::jpeg};
    if constexpr (Decode) {
        jpeg_start_decompress(&cinfo);
        image.width = cinfo.output_width;
        image.height = cinfo.output_height;
        image.channels = static_cast<std::size_t>(cinfo.output_components);
        image.pixels.resize(image.width * image.height * image.channels);
        while (cinfo.output_scanline < cinfo.output_height) {
            JSAMPROW row = image.pixels.data() + cinfo.output_scanline * image.width * image.channels;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    jpeg_destroy_decompress(&cinfo);
    if constexpr (Decode) {
        return image;
    } else {
        return info;
    }
}

} // namespace

ImageInfo probe_image(const std::filesystem::path& path)
{
    const auto format = format_from_extension(path);
    if (!format) {
        throw FormatError("unsupported image extension: " + path.string());
    }
    return *format == ImageFormat::png ? probe_png(path) : jpeg_read<false>(path);
}

Image read_image(const std::filesystem::path& path)
{
    const auto format = format_from_extension(path);
    if (!format) {
        throw FormatError("unsupported image extension: " + path.string());
    }
    return *format == ImageFormat::png ? read_png(path) : jpeg_read<true>(path);
}

void write_png(const std::filesystem::path& path, const Image& image)
{
    if (image.channels < 1 || image.channels > 4 ||
        image.pixels.size() != image.width * image.height * image.channels) {
        throw ContractError("write_png: inconsistent image buffer");
    }
    PngImage png;
    png.img.width = static_cast<png_uint_32>(image.width);
    png.img.height = static_cast<png_uint_32>(image.height);
    png.img.format = (image.channels >= 3 ? PNG_FORMAT_FLAG_COLOR : 0) |
                     (image.channels % 2 == 0 ? PNG_FORMAT_FLAG_ALPHA : 0);
    if (!png_image_write_to_file(&png.img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + png.img.message);
    }
}

void write_jpeg(const std::filesystem::path& path, const Image& image, int quality)
{
    if ((image.channels != 1 && image.channels != 3) ||
        image.pixels.size() != image.width * image.height * image.channels) {
        throw ContractError("write_jpeg: needs a gray or RGB buffer");
    }
    FilePtr file = open_file(path, "wb");
    jpeg_compress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw IoError("cannot write JPEG " + path.string() + ": " + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = static_cast<int>(image.channels);
    cinfo.in_color_space = image.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<std::uint8_t*>(image.pixels.data()) +
                       cinfo.next_scanline * image.width * image.channels;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

Tensor image_to_planar(const Image& image)
{
    if (image.channels != 3) {
        throw ContractError("image_to_planar expects an RGB image");
    }
    Tensor t({3, image.height, image.width});
    const std::size_t plane = image.height * image.width;
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            t[c * plane + p] = image.pixels[p * 3 + c];
        }
    }
    return t;
}

Image planar_to_image(const Tensor& pixels)
{
    if (pixels.rank() != 3 || pixels.dim(0) != 3) {
        throw ShapeError("planar_to_image expects 3 x H x W, got " + shape_string(pixels.shape()));
    }
    const std::size_t h = pixels.dim(1), w = pixels.dim(2), plane = h * w;
    Image out{w, h, 3, std::vector<std::uint8_t>(plane * 3)};
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::clamp(pixels[c * plane + p], -1.0, 1.0);
            out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
        }
    }
    return out;
}

} // namespace artgan
