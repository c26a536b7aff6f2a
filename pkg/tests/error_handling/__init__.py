# Error handling tests package
