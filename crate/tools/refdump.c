/*
 * refdump: dump a JPEG file's content using libjpeg, for generating and
 * re-verifying the frozen references under crates/core/tests/fixtures/.
 *
 *   refdump file.jpg          quantized DCT coefficients, one block per
 *                             line in the same format as `jcl dump-coeffs`:
 *                             channel bx by c0 c1 ... c63
 *                             (natural, row-major coefficient order)
 *
 *   refdump -pixels file.jpg  decoded RGB image as binary PPM on stdout,
 *                             using the float IDCT
 *
 *   cc -O2 -o refdump refdump.c -ljpeg
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <jpeglib.h>

static int dump_coefficients(struct jpeg_decompress_struct *cinfo) {
    jvirt_barray_ptr *arrays = jpeg_read_coefficients(cinfo);
    if (!arrays) {
        fprintf(stderr, "jpeg_read_coefficients failed\n");
        return 1;
    }
    for (int ci = 0; ci < cinfo->num_components; ci++) {
        jpeg_component_info *comp = &cinfo->comp_info[ci];
        for (JDIMENSION by = 0; by < comp->height_in_blocks; by++) {
            JBLOCKARRAY rows = (cinfo->mem->access_virt_barray)(
                (j_common_ptr)cinfo, arrays[ci], by, 1, FALSE);
            for (JDIMENSION bx = 0; bx < comp->width_in_blocks; bx++) {
                printf("%d %u %u", ci, (unsigned)bx, (unsigned)by);
                for (int k = 0; k < DCTSIZE2; k++)
                    printf(" %d", rows[0][bx][k]);
                printf("\n");
            }
        }
    }
    return 0;
}

static int dump_pixels(struct jpeg_decompress_struct *cinfo) {
    cinfo->dct_method = JDCT_FLOAT;
    cinfo->out_color_space = JCS_RGB;
    jpeg_start_decompress(cinfo);
    printf("P6\n%u %u\n255\n", cinfo->output_width, cinfo->output_height);
    JSAMPROW row = malloc(cinfo->output_width * 3);
    while (cinfo->output_scanline < cinfo->output_height) {
        jpeg_read_scanlines(cinfo, &row, 1);
        fwrite(row, 3, cinfo->output_width, stdout);
    }
    free(row);
    return 0;
}

int main(int argc, char **argv) {
    int pixels = argc == 3 && strcmp(argv[1], "-pixels") == 0;
    if (!(argc == 2 || pixels)) {
        fprintf(stderr, "usage: refdump [-pixels] file.jpg\n");
        return 2;
    }
    FILE *f = fopen(argv[argc - 1], "rb");
    if (!f) {
        perror(argv[argc - 1]);
        return 2;
    }

    struct jpeg_decompress_struct cinfo;
    struct jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);

    int rc = pixels ? dump_pixels(&cinfo) : dump_coefficients(&cinfo);

    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    fclose(f);
    return rc;
}
