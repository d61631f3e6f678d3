# Business logic, one module per pipeline stage
