'''
OBJ and PLY readers and writers.

PLY is handled in ascii and binary little-endian encodings. Texture
coordinates, colours and other extra properties are skipped on read.
'''
import logging
from pathlib import Path

import numpy as np

from mesh_corr.constants import (
    MESH_FORMATS,
    PLY_HEADER_TO_APP,
    PLY_APP_TO_HEADER,
    PLY_TYPES,
)
from mesh_corr.mesh_core import Mesh, EmptyMeshError
from mesh_corr.utils import MeshCorrError
from mesh_corr.validators import validate_mesh_file


logger = logging.getLogger(__name__)



class MeshParseError(MeshCorrError):
    '''
    Malformed mesh file. line is 1-based, offset is a byte offset.
    '''
    def __init__(self, message, line=None, offset=None):
        if (line is not None):
            message = "{} line:{}".format(message, line)
        if (offset is not None):
            message = "{} offset:{}".format(message, offset)
        super().__init__(message)
        self.line = line
        self.offset = offset



def _fan(indices):
    # polygon -> triangles sharing the first corner
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]

def _build(vertices, faces, normals, where):
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if (len(faces) == 0):
        raise EmptyMeshError("Mesh file has no faces.")
    if (faces.min() < 0 or faces.max() >= len(vertices)):
        raise MeshParseError("Face index out of range.", **where)
    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 2] == faces[:, 0])
    if (np.any(repeated)):
        logger.warning("Dropping %s degenerate face(s)", int(np.count_nonzero(repeated)))
        faces = faces[~repeated]
        if (len(faces) == 0):
            raise EmptyMeshError("Mesh file has only degenerate faces.")
    if (normals is not None and len(normals) != len(vertices)):
        normals = None
    return Mesh(vertices, faces, normals)



## OBJ
def _parse_obj(data):
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise MeshParseError("OBJ is not utf-8 text.", offset=e.start) from e
    vertices = []
    normals = []
    faces = []
    last_face_line = None
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if (not parts or parts[0].startswith('#')):
            continue
        tag = parts[0]
        try:
            if (tag == 'v'):
                if (len(parts) < 4):
                    raise ValueError
                vertices.append([float(x) for x in parts[1:4]])
            elif (tag == 'vn'):
                if (len(parts) < 4):
                    raise ValueError
                normals.append([float(x) for x in parts[1:4]])
            elif (tag == 'f'):
                if (len(parts) < 4):
                    raise ValueError
                idx = []
                for p in parts[1:]:
                    i = int(p.split('/')[0])
                    if (i == 0):
                        raise ValueError
                    # negative indices count back from the latest vertex
                    idx.append(len(vertices) + i if i < 0 else i - 1)
                faces.extend(_fan(idx))
                last_face_line = n
        except ValueError:
            raise MeshParseError("Malformed OBJ record '{}'.".format(tag), line=n)
    return _build(vertices, faces, normals or None, {'line': last_face_line})

def _format_obj(mesh):
    out = ["# mesh_corr\n"]
    for v in mesh.vertices:
        out.append("v {:.9g} {:.9g} {:.9g}\n".format(*v))
    for v in mesh.normals:
        out.append("vn {:.9g} {:.9g} {:.9g}\n".format(*v))
    for f in mesh.faces + 1:
        out.append("f {0}//{0} {1}//{1} {2}//{2}\n".format(*f))
    return "".join(out).encode('utf-8')



## PLY
def _ply_header(data):
    end = data.find(b'end_header')
    if (not data.startswith(b'ply') or end < 0):
        raise MeshParseError("Not a PLY file.", offset=0)
    body = data.find(b'\n', end) + 1
    if (body == 0):
        raise MeshParseError("PLY header not terminated.", offset=end)
    fmt = None
    elements = []
    lines = data[:end].decode('ascii', errors='replace').splitlines()
    for n, line in enumerate(lines, 1):
        parts = line.split()
        if (not parts or parts[0] in ('ply', 'comment', 'obj_info')):
            continue
        if (parts[0] == 'format'):
            if (len(parts) < 2 or not(parts[1] in PLY_HEADER_TO_APP)):
                raise MeshParseError("Unsupported PLY format.", line=n)
            fmt = PLY_HEADER_TO_APP[parts[1]]
        elif (parts[0] == 'element'):
            try:
                elements.append({'name': parts[1], 'count': int(parts[2]), 'props': []})
            except (IndexError, ValueError):
                raise MeshParseError("Malformed PLY element.", line=n)
        elif (parts[0] == 'property'):
            if (not elements):
                raise MeshParseError("PLY property before any element.", line=n)
            if (len(parts) == 5 and parts[1] == 'list' and parts[2] in PLY_TYPES and parts[3] in PLY_TYPES):
                elements[-1]['props'].append((parts[4], PLY_TYPES[parts[2]], PLY_TYPES[parts[3]]))
            elif (len(parts) == 3 and parts[1] in PLY_TYPES):
                elements[-1]['props'].append((parts[2], PLY_TYPES[parts[1]]))
            else:
                raise MeshParseError("Malformed PLY property.", line=n)
        else:
            raise MeshParseError("Unrecognised PLY header line.", line=n)
    if (fmt is None):
        raise MeshParseError("PLY header has no format line.", offset=0)
    return fmt, elements, body

def _vertex_arrays(table):
    # table is a dict of columns or a structured array
    try:
        vertices = np.stack([table[k] for k in ('x', 'y', 'z')], axis=1).astype(np.float64)
    except (KeyError, ValueError):
        raise MeshParseError("PLY vertex element lacks x, y, z.")
    normals = None
    try:
        normals = np.stack([table[k] for k in ('nx', 'ny', 'nz')], axis=1).astype(np.float64)
    except (KeyError, ValueError):
        pass
    return vertices, normals

def _parse_ply_ascii(data, elements, body):
    try:
        tokens = data[body:].decode('ascii').split()
    except UnicodeDecodeError as e:
        raise MeshParseError("PLY ascii body is not ascii.", offset=body + e.start) from e
    pos = 0
    vertices = normals = None
    faces = []
    for el in elements:
        scalar = all(len(p) == 2 for p in el['props'])
        if (scalar):
            width = len(el['props'])
            end = pos + el['count'] * width
            if (end > len(tokens)):
                raise MeshParseError("PLY body ends early. element:{}".format(el['name']))
            try:
                values = np.array(tokens[pos:end], dtype=np.float64).reshape(el['count'], width)
            except ValueError:
                raise MeshParseError("Malformed PLY value. element:{}".format(el['name']))
            pos = end
            if (el['name'] == 'vertex'):
                table = {p[0]: values[:, i] for i, p in enumerate(el['props'])}
                vertices, normals = _vertex_arrays(table)
            continue
        for r in range(el['count']):
            for p in el['props']:
                try:
                    if (len(p) == 3):
                        k = int(tokens[pos])
                        row = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
                        if (len(row) != k):
                            raise IndexError
                        pos += 1 + k
                        if (el['name'] == 'face' and p[0] in ('vertex_indices', 'vertex_index')):
                            if (k < 3):
                                raise ValueError
                            faces.extend(_fan(row))
                    else:
                        float(tokens[pos])
                        pos += 1
                except (IndexError, ValueError):
                    raise MeshParseError("Malformed PLY record. element:{} record:{}".format(el['name'], r))
    if (vertices is None):
        raise MeshParseError("PLY has no vertex element.")
    return vertices, faces, normals

def _parse_ply_binary(data, elements, body):
    pos = body
    vertices = normals = None
    faces = []
    for el in elements:
        props = el['props']
        if (all(len(p) == 2 for p in props)):
            dtype = np.dtype([(p[0], p[1]) for p in props])
            size = dtype.itemsize * el['count']
            if (pos + size > len(data)):
                raise MeshParseError("PLY body ends early. element:{}".format(el['name']), offset=pos)
            table = np.frombuffer(data, dtype=dtype, count=el['count'], offset=pos)
            pos += size
            if (el['name'] == 'vertex'):
                vertices, normals = _vertex_arrays(table)
            continue
        if (len(props) == 1 and el['count'] > 0):
            # all-triangle fast path
            _, ctype, itype = props[0]
            dtype = np.dtype([('n', ctype), ('i', itype, 3)])
            size = dtype.itemsize * el['count']
            if (pos + size <= len(data)):
                table = np.frombuffer(data, dtype=dtype, count=el['count'], offset=pos)
                if (np.all(table['n'] == 3)):
                    if (el['name'] == 'face'):
                        faces.extend(table['i'].astype(np.int64).tolist())
                    pos += size
                    continue
        for r in range(el['count']):
            for p in props:
                start = pos
                try:
                    if (len(p) == 3):
                        ct = np.dtype(p[1])
                        k = int(np.frombuffer(data, dtype=ct, count=1, offset=pos)[0])
                        pos += ct.itemsize
                        it = np.dtype(p[2])
                        row = np.frombuffer(data, dtype=it, count=k, offset=pos).astype(np.int64).tolist()
                        pos += it.itemsize * k
                        if (el['name'] == 'face' and p[0] in ('vertex_indices', 'vertex_index')):
                            if (k < 3):
                                raise ValueError
                            faces.extend(_fan(row))
                    else:
                        pos += np.dtype(p[1]).itemsize
                        if (pos > len(data)):
                            raise ValueError
                except ValueError:
                    raise MeshParseError("Malformed PLY record. element:{} record:{}".format(el['name'], r), offset=start)
    if (vertices is None):
        raise MeshParseError("PLY has no vertex element.")
    return vertices, faces, normals

def _parse_ply(data, declared):
    fmt, elements, body = _ply_header(data)
    if (declared != 'ply' and declared != fmt):
        raise MeshParseError("PLY encoding does not match declared format. declared:{} found:{}".format(
            declared,
            fmt
        ), offset=0)
    if (fmt == 'ply-ascii'):
        vertices, faces, normals = _parse_ply_ascii(data, elements, body)
    else:
        vertices, faces, normals = _parse_ply_binary(data, elements, body)
    return _build(vertices, faces, normals, {'offset': body})

def _format_ply(mesh, fmt):
    header = "\n".join((
        "ply",
        "format {} 1.0".format(PLY_APP_TO_HEADER[fmt]),
        "comment mesh_corr",
        "element vertex {}".format(mesh.n_vertices),
        "property double x",
        "property double y",
        "property double z",
        "property double nx",
        "property double ny",
        "property double nz",
        "element face {}".format(mesh.n_faces),
        "property list uchar int vertex_indices",
        "end_header",
        "",
    )).encode('ascii')
    if (fmt == 'ply-ascii'):
        out = [header.decode('ascii')]
        for v, n in zip(mesh.vertices, mesh.normals):
            out.append("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n".format(*v, *n))
        for f in mesh.faces:
            out.append("3 {} {} {}\n".format(*f))
        return "".join(out).encode('ascii')
    vdtype = np.dtype([(k, '<f8') for k in ('x', 'y', 'z', 'nx', 'ny', 'nz')])
    vtable = np.empty(mesh.n_vertices, dtype=vdtype)
    for i, k in enumerate(('x', 'y', 'z')):
        vtable[k] = mesh.vertices[:, i]
    for i, k in enumerate(('nx', 'ny', 'nz')):
        vtable[k] = mesh.normals[:, i]
    ftable = np.empty(mesh.n_faces, dtype=np.dtype([('n', 'u1'), ('i', '<i4', 3)]))
    ftable['n'] = 3
    ftable['i'] = mesh.faces
    return header + vtable.tobytes() + ftable.tobytes()



## Public
def parse_mesh(data, format):
    '''
    Parse mesh file content.

    data
        bytes
    format
        'obj', 'ply-ascii', 'ply-binary-little-endian', or 'ply' to take
        the encoding from the header
    return
        Mesh. Polygons are fan-triangulated; normals are computed when
        the file has none.
    '''
    if (format == 'obj'):
        return _parse_obj(data)
    if (format == 'ply' or format in MESH_FORMATS):
        return _parse_ply(data, format)
    raise MeshParseError("Unrecognised mesh format. format:{}".format(format))

def format_mesh(mesh, format):
    '''
    Serialise a mesh.
    format
        'obj', 'ply-ascii' or 'ply-binary-little-endian'
    return
        bytes
    '''
    if (format == 'obj'):
        return _format_obj(mesh)
    if (format in PLY_APP_TO_HEADER):
        return _format_ply(mesh, format)
    raise MeshParseError("Unrecognised mesh format. format:{}".format(format))

def read_mesh(path):
    kind = validate_mesh_file(path)
    return parse_mesh(Path(path).read_bytes(), kind)

def write_mesh(mesh, path, format=None):
    '''
    Write a mesh. Format follows the extension when not given; PLY is
    written binary little-endian.
    '''
    path = Path(path)
    if (format is None):
        format = 'obj' if path.suffix.lower() == '.obj' else 'ply-binary-little-endian'
    path.write_bytes(format_mesh(mesh, format))
    return path
