from django.db import models


class TileLabel(models.TextChoices):
    BUILDINGS = "buildings", "Buildings"
    NO_BUILDINGS = "no_buildings", "No buildings"


class DihedralTransform(models.TextChoices):
    IDENTITY = "identity", "Identity"
    HFLIP = "hflip", "Horizontal flip"
    VFLIP = "vflip", "Vertical flip"
    ROT180 = "rot180", "180 degree rotation"


class BackendKind(models.TextChoices):
    HEURISTIC = "heuristic", "Hatch heuristic"
    ORACLE = "oracle", "Ground-truth oracle"
    EXTERNAL = "external", "External process"
    ALWAYS = "always", "Always positive"


class ChangeKind(models.TextChoices):
    DISAPPEARED = "disappeared", "Disappeared"
    APPEARED = "appeared", "Appeared"
