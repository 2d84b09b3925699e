from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.utils.deconstruct import deconstructible

from mesh_corr.constants import EXTENSION_TO_APP_FORMAT
from mesh_corr.utils import MeshCorrError


class MeshValidationError(MeshCorrError, ValidationError):
    '''
    A mesh failed a structural check. Carries a Django validation code.
    '''
    def __str__(self):
        return '; '.join(self.messages)



@deconstructible
class MeshValidator:
    '''
    Check a mesh is an open or closed manifold.

    closed
        if True, boundary edges are an error too
    '''
    messages = {
        'non_finite': "Mesh has non-finite vertex positions.",
        'non_manifold_edge': "Edges with more than two faces. count:%(count)s first:%(first)s",
        'non_manifold_vertex': "Vertices whose faces do not form a single fan. count:%(count)s first:%(first)s",
        'not_closed': "Mesh has boundary edges. count:%(count)s",
        'normals': "Normals are not unit length. tolerance:%(tolerance)s",
    }
    closed = False
    normal_tolerance = 1e-6

    def __init__(self, closed=None):
        if closed is not None:
            self.closed = closed

    def __call__(self, mesh):
        if (not np.all(np.isfinite(mesh.vertices))):
            raise MeshValidationError(
                self.messages['non_finite'],
                code='non_finite',
            )
        over = np.flatnonzero(mesh.edge_face_count > 2)
        if (len(over) > 0):
            raise MeshValidationError(
                self.messages['non_manifold_edge'],
                code='non_manifold_edge',
                params={'count': len(over), 'first': int(over[0])},
            )
        bowties = mesh.non_manifold_vertices()
        if (len(bowties) > 0):
            raise MeshValidationError(
                self.messages['non_manifold_vertex'],
                code='non_manifold_vertex',
                params={'count': len(bowties), 'first': int(bowties[0])},
            )
        if (self.closed):
            open_edges = int(np.count_nonzero(mesh.boundary_edges))
            if (open_edges > 0):
                raise MeshValidationError(
                    self.messages['not_closed'],
                    code='not_closed',
                    params={'count': open_edges},
                )
        lengths = np.linalg.norm(mesh.normals, axis=1)
        if (np.any(np.abs(lengths - 1.0) > self.normal_tolerance)):
            raise MeshValidationError(
                self.messages['normals'],
                code='normals',
                params={'tolerance': self.normal_tolerance},
            )

    def __eq__(self, other):
        return (
            isinstance(other, self.__class__) and
            self.closed == other.closed
        )

def validate_mesh(mesh, closed=False):
    return MeshValidator(closed)(mesh)



@deconstructible
class MeshFileExtensionValidator:
    '''
    Check the extension of a mesh file.
    Checks the extension against the internally defined set, then
    looks at the first bytes to see the content agrees.

    allowed_extensions
        a lower case list
    '''
    messages = {
        'no_extension': "No file extension. Allowed extensions: %(extensions)s.",
        'extension_not_allowed': "File extension %(extension)s not allowed. allowed extensions: %(extensions)s.",
        'format_extension_mismatch': "File content does not match extension. extension:%(extension)s",
    }
    allowed_extensions = tuple(EXTENSION_TO_APP_FORMAT)

    def __init__(self, allowed_extensions=None):
        if allowed_extensions is not None:
            self.allowed_extensions = allowed_extensions
        self.allowed_extensions_message = ', '.join(self.allowed_extensions)

    def __call__(self, path):
        path = Path(path)
        extension = path.suffix[1:].lower()
        if (len(extension) < 2):
            raise ValidationError(
                    self.messages['no_extension'],
                    code='no_extension',
                    params={'extensions': self.allowed_extensions_message},
                )
        if (not(extension in self.allowed_extensions)):
            raise ValidationError(
                    self.messages['extension_not_allowed'],
                    code='extension_not_allowed',
                    params={'extension': extension, 'extensions': self.allowed_extensions_message},
                )
        with open(path, 'rb') as f:
            head = f.read(3)
        is_ply = head == b'ply'
        if (is_ply != (EXTENSION_TO_APP_FORMAT[extension] == 'ply')):
            raise ValidationError(
                    self.messages['format_extension_mismatch'],
                    code='format_extension_mismatch',
                    params={'extension': extension},
                )
        return EXTENSION_TO_APP_FORMAT[extension]

    def __eq__(self, other):
        return (
            isinstance(other, self.__class__) and
            self.allowed_extensions == other.allowed_extensions
        )

def validate_mesh_file(path):
    '''
    return
        'obj' or 'ply'
    '''
    return MeshFileExtensionValidator()(path)
