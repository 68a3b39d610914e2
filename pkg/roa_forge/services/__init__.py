# Services package: one module per computational stage.
